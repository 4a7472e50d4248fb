//! Semi-supervised training by label guessing, sharpening and mixing of
//! labeled and unlabeled encodings.
//!
//! One step: each labeled example gets one augmentation and each unlabeled
//! example gets `k`; both kinds are interpolated with their originals at
//! λ₁. The model's averaged, sharpened predictions on the unlabeled
//! variants become their targets. The labeled and unlabeled virtual
//! batches are then mixed with a shuffled copy of their union at λ₂.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{AlignedPair, AugmentTables, OpSpec};
use crate::corpus::{Example, Schema, TokenVocab};
use crate::error::{Error, Result};
use crate::mixda::{
    augment_pair, interpolate_encodings, mix_label_rows, pair_batches, AugmentedPair, MixLambda,
};
use crate::model::{brier, cross_entropy, EncodedBatch, Model, PredictionBatch, SoftTargets};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct MixMatchConfig {
    /// Augmented variants per unlabeled example.
    pub k: usize,
    /// Sharpening temperature.
    pub temperature: f64,
    pub alpha_aug: f64,
    pub alpha_mix: f64,
    /// Weight of the unlabeled loss.
    pub lambda_u: f64,
    /// Skip sampling λ₁ and use this value.
    pub fixed_lambda1: Option<f64>,
    /// Skip sampling λ₂ and use this value.
    pub fixed_lambda2: Option<f64>,
}

impl Default for MixMatchConfig {
    fn default() -> Self {
        Self {
            k: 2,
            temperature: 0.5,
            alpha_aug: 0.2,
            alpha_mix: 0.2,
            lambda_u: 0.1,
            fixed_lambda1: None,
            fixed_lambda2: None,
        }
    }
}

impl MixMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature <= 1.0) {
            return Err(Error::Config(format!(
                "temperature {} outside (0, 1]",
                self.temperature
            )));
        }
        if !(self.lambda_u >= 0.0 && self.lambda_u.is_finite()) {
            return Err(Error::Config(format!(
                "lambda-u must be non-negative, got {}",
                self.lambda_u
            )));
        }
        for (name, a) in [("alpha-aug", self.alpha_aug), ("alpha-mix", self.alpha_mix)] {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {a}")));
            }
        }
        for l in [self.fixed_lambda1, self.fixed_lambda2]
            .into_iter()
            .flatten()
        {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("fixed lambda {l} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// `p_i^{1/T} / Σ_j p_j^{1/T}`, computed in log space.
pub fn sharpen(p: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if temperature == 1.0 {
        return Ok(p.to_vec());
    }
    let logs: Vec<f64> = p.iter().map(|v| v.ln() / temperature).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Numeric("cannot sharpen an all-zero row".into()));
    }
    let e: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// Guessed targets for a batch of unlabeled examples.
#[derive(Clone, Debug)]
pub struct GuessedBatch {
    pub temperature: f64,
    pub k: usize,
    /// Averaged predictions: per original token for tagging, one row for
    /// span classification.
    pub mean: Vec<Vec<Vec<f64>>>,
    /// `mean` after sharpening.
    pub sharpened: Vec<Vec<Vec<f64>>>,
}

impl GuessedBatch {
    /// Targets for the variant rows `b·k + j`, laid over each variant's
    /// slot grid. Slots that only exist in the augmentation get none.
    pub fn variant_targets(
        &self,
        variants: &[AugmentedPair],
        schema: &Schema,
        max_len: usize,
    ) -> SoftTargets {
        let classes = schema.num_classes();
        let mut rows = Vec::new();
        for (v, p) in variants.iter().enumerate() {
            let q = &self.sharpened[v / self.k];
            if schema.is_tagging() {
                rows.push(None);
                for s in 0..max_len - 1 {
                    rows.push(
                        p.pair
                            .orig_index
                            .get(s)
                            .copied()
                            .flatten()
                            .map(|t| q[t].clone()),
                    );
                }
            } else {
                rows.push(Some(q[0].clone()));
            }
        }
        SoftTargets { classes, rows }
    }
}

fn pairs_of(v: &[AugmentedPair]) -> Vec<&AlignedPair> {
    v.iter().map(|p| &p.pair).collect()
}

/// Averages predictions over the `k` variants of each example. `variants`
/// holds `k` consecutive entries per example, and `pred` has one row per
/// variant (span classification) or per variant slot (tagging).
pub fn guesses_from_predictions(
    pred: &PredictionBatch,
    variants: &[AugmentedPair],
    k: usize,
    temperature: f64,
) -> Result<GuessedBatch> {
    if k == 0 || !variants.len().is_multiple_of(k) || pred.size != variants.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} variants with k = {k}",
            pred.size,
            variants.len()
        )));
    }
    let c = pred.classes;
    let mut mean = Vec::with_capacity(variants.len() / k);
    for group in variants.chunks(k).enumerate() {
        let (b, vs) = group;
        let n = vs[0].pair.original.len();
        let tagging = pred.num_rows() != pred.size;
        let mut acc = vec![vec![0.0; c]; if tagging { n } else { 1 }];
        for (j, v) in vs.iter().enumerate() {
            let row = b * k + j;
            if tagging {
                for (s, t) in v.pair.orig_index.iter().enumerate() {
                    if let Some(t) = t {
                        let p = pred.row(row * pred.max_len + s + 1);
                        acc[*t].iter_mut().zip(p).for_each(|(a, x)| *a += x);
                    }
                }
            } else {
                acc[0]
                    .iter_mut()
                    .zip(pred.row(row))
                    .for_each(|(a, x)| *a += x);
            }
        }
        for r in &mut acc {
            r.iter_mut().for_each(|a| *a /= k as f64);
        }
        mean.push(acc);
    }
    let sharpened = mean
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|r| sharpen(r, temperature))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GuessedBatch {
        temperature,
        k,
        mean,
        sharpened,
    })
}

/// Guesses labels with the model held fixed: predictions on the λ₁ mix of
/// each unlabeled example and its variants, averaged and sharpened.
#[allow(clippy::too_many_arguments)]
pub fn guess_labels(
    model: &Model,
    variants: &[AugmentedPair],
    k: usize,
    lambda1: f64,
    temperature: f64,
    schema: &Schema,
    vocab: &TokenVocab,
    max_len: usize,
) -> Result<GuessedBatch> {
    if variants.is_empty() {
        return Ok(GuessedBatch {
            temperature,
            k,
            mean: Vec::new(),
            sharpened: Vec::new(),
        });
    }
    let (u, ua) = pair_batches(&pairs_of(variants), schema, vocab, max_len, false)?;
    let e = interpolate_encodings(
        &model.encode_frozen(&u)?,
        &model.encode_frozen(&ua)?,
        lambda1,
    )?;
    guesses_from_predictions(&model.predict(&e)?, variants, k, temperature)
}

/// Random draws of one step.
#[derive(Clone, Debug)]
pub struct MixMatchPlan {
    pub labeled: Vec<AugmentedPair>,
    /// `k` consecutive variants per unlabeled example.
    pub unlabeled: Vec<AugmentedPair>,
    pub k: usize,
    pub lambda1: MixLambda,
    pub lambda2: MixLambda,
    /// Row order of the shuffled pool.
    pub perm: Vec<usize>,
}

impl MixMatchPlan {
    #[allow(clippy::too_many_arguments)]
    pub fn sample<R: Rng + ?Sized>(
        labeled: &[Example],
        unlabeled: &[Example],
        op: &OpSpec,
        tables: &AugmentTables<'_>,
        unlabeled_tables: &AugmentTables<'_>,
        config: &MixMatchConfig,
        max_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let labeled_pairs = labeled
            .iter()
            .map(|e| augment_pair(e, op, tables, max_len, rng))
            .collect::<Result<Vec<_>>>()?;
        let mut variants = Vec::with_capacity(unlabeled.len() * config.k);
        for u in unlabeled {
            for _ in 0..config.k {
                variants.push(augment_pair(u, op, unlabeled_tables, max_len, rng)?);
            }
        }
        let lambda1 = match config.fixed_lambda1 {
            Some(l) => MixLambda::fixed(l),
            None => MixLambda::draw(config.alpha_aug, false, rng)?,
        };
        let lambda2 = match config.fixed_lambda2 {
            Some(l) => MixLambda::fixed(l),
            None => MixLambda::draw(config.alpha_mix, true, rng)?,
        };
        let mut perm: Vec<usize> = (0..labeled_pairs.len() + variants.len()).collect();
        perm.shuffle(rng);
        Ok(Self {
            labeled: labeled_pairs,
            unlabeled: variants,
            k: config.k,
            lambda1,
            lambda2,
            perm,
        })
    }
}

/// The shuffled union of the labeled and unlabeled virtual batches.
#[derive(Clone, Debug)]
pub struct MixPool {
    pub encoding: EncodedBatch,
    pub targets: SoftTargets,
    pub perm: Vec<usize>,
    pub labeled_size: usize,
}

/// Result of the mixing stage.
#[derive(Clone, Debug)]
pub struct Mixed {
    pub pool: MixPool,
    pub x: EncodedBatch,
    pub y: SoftTargets,
    pub u: EncodedBatch,
    pub q: SoftTargets,
}

fn rows_per(t: &SoftTargets, size: usize) -> Result<usize> {
    if size == 0 {
        return Ok(0);
    }
    if !t.rows.len().is_multiple_of(size) {
        return Err(Error::Shape(format!(
            "{} target rows for {size} examples",
            t.rows.len()
        )));
    }
    Ok(t.rows.len() / size)
}

fn select_targets(t: &SoftTargets, per: usize, idx: &[usize]) -> SoftTargets {
    SoftTargets {
        classes: t.classes,
        rows: idx
            .iter()
            .flat_map(|&i| t.rows[i * per..(i + 1) * per].iter().cloned())
            .collect(),
    }
}

fn mix_targets(a: &SoftTargets, b: &SoftTargets, lambda: f64) -> Result<SoftTargets> {
    let rows = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(x, y)| mix_label_rows(x.as_deref(), y.as_deref(), lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(SoftTargets {
        classes: a.classes,
        rows,
    })
}

/// Mixes the labeled virtual batch `x_hat` (B rows, targets `y`) and the
/// unlabeled batch `u_hat` (kB rows, targets `q`) with a shuffled copy of
/// their union.
pub fn mixmatch_mix(
    x_hat: &EncodedBatch,
    y: &SoftTargets,
    u_hat: &EncodedBatch,
    q: &SoftTargets,
    lambda2: f64,
    perm: &[usize],
) -> Result<Mixed> {
    let b = x_hat.size;
    let total = b + u_hat.size;
    let mut seen = vec![false; total];
    if perm.len() != total
        || !perm
            .iter()
            .all(|&i| i < total && !std::mem::replace(&mut seen[i], true))
    {
        return Err(Error::Shape(format!(
            "shuffle is not a permutation of {total} rows"
        )));
    }
    if y.rows.len() != rows_per(y, b)? * b {
        return Err(Error::Shape(
            "labeled targets do not match the batch".into(),
        ));
    }
    let per = rows_per(y, b)?;
    if u_hat.size > 0 && rows_per(q, u_hat.size)? != per {
        return Err(Error::Shape(
            "unlabeled targets do not match the labeled layout".into(),
        ));
    }
    let union = if u_hat.size == 0 {
        x_hat.clone()
    } else {
        EncodedBatch::concat(&[x_hat, u_hat])?
    };
    let union_t = SoftTargets {
        classes: y.classes,
        rows: y.rows.iter().chain(&q.rows).cloned().collect(),
    };
    let w = union.select(perm);
    let wt = select_targets(&union_t, per, perm);
    let head: Vec<usize> = (0..b).collect();
    let tail: Vec<usize> = (b..total).collect();
    let x = interpolate_encodings(x_hat, &w.select(&head), lambda2)?;
    let y_v = mix_targets(y, &select_targets(&wt, per, &head), lambda2)?;
    let (u, q_v) = if u_hat.size == 0 {
        (w.select(&tail), select_targets(&wt, per, &tail))
    } else {
        (
            interpolate_encodings(u_hat, &w.select(&tail), lambda2)?,
            mix_targets(q, &select_targets(&wt, per, &tail), lambda2)?,
        )
    };
    Ok(Mixed {
        pool: MixPool {
            encoding: w,
            targets: wt,
            perm: perm.to_vec(),
            labeled_size: b,
        },
        x,
        y: y_v,
        u,
        q: q_v,
    })
}

/// Loss terms and their logit gradients.
#[derive(Clone, Debug)]
pub struct MixMatchLoss {
    pub total: f64,
    pub loss_x: f64,
    pub loss_u: f64,
    pub d_logits_x: Vec<f64>,
    pub d_logits_u: Vec<f64>,
}

/// `Loss_X + λ_U·Loss_U`: cross-entropy on the labeled virtual batch and
/// the Brier score on the unlabeled one.
pub fn mixmatch_loss(
    pred_x: &PredictionBatch,
    y: &SoftTargets,
    pred_u: &PredictionBatch,
    q: &SoftTargets,
    lambda_u: f64,
) -> Result<MixMatchLoss> {
    let lx = cross_entropy(pred_x, y)?;
    let lu = brier(pred_u, q)?;
    let loss_u = lu.value;
    let lu = lu.scale(lambda_u);
    Ok(MixMatchLoss {
        total: lx.value + lu.value,
        loss_x: lx.value,
        loss_u,
        d_logits_x: lx.d_logits,
        d_logits_u: lu.d_logits,
    })
}

#[derive(Clone, Debug)]
pub struct MixMatchOutput {
    pub total: f64,
    pub loss_x: f64,
    pub loss_u: f64,
}

/// Loss and gradients of a planned step with fixed guesses.
#[allow(clippy::too_many_arguments)]
pub fn mixmatch_loss_with(
    model: &Model,
    plan: &MixMatchPlan,
    guesses: &GuessedBatch,
    config: &MixMatchConfig,
    schema: &Schema,
    vocab: &TokenVocab,
    max_len: usize,
    grads: &mut [f64],
) -> Result<MixMatchOutput> {
    let mut tape = model.tape();
    let l1 = plan.lambda1.effective;
    let c = schema.num_classes();
    let (x, xa) = pair_batches(&pairs_of(&plan.labeled), schema, vocab, max_len, true)?;
    let ex = model.encode(&x, &mut tape)?;
    let exa = model.encode(&xa, &mut tape)?;
    let x_hat = interpolate_encodings(&ex, &exa, l1)?;
    let y = mix_targets(
        &SoftTargets::from_labels(&x.labels, c),
        &SoftTargets::from_labels(&xa.labels, c),
        l1,
    )?;
    let (u_hat, q) = if plan.unlabeled.is_empty() {
        let u_hat = ex.select(&[]);
        (
            u_hat,
            SoftTargets {
                classes: c,
                rows: Vec::new(),
            },
        )
    } else {
        let (u, ua) = pair_batches(&pairs_of(&plan.unlabeled), schema, vocab, max_len, false)?;
        let eu = model.encode(&u, &mut tape)?;
        let eua = model.encode(&ua, &mut tape)?;
        let u_hat = interpolate_encodings(&eu, &eua, l1)?;
        (
            u_hat,
            guesses.variant_targets(&plan.unlabeled, schema, max_len),
        )
    };
    let mixed = mixmatch_mix(&x_hat, &y, &u_hat, &q, plan.lambda2.effective, &plan.perm)?;
    let pred_x = model.predict(&mixed.x)?;
    let pred_u = model.predict(&mixed.u)?;
    let loss = mixmatch_loss(&pred_x, &mixed.y, &pred_u, &mixed.q, config.lambda_u)?;
    model.backward_from_logits(&mut tape, &mixed.x, &loss.d_logits_x, grads)?;
    if mixed.u.size > 0 {
        model.backward_from_logits(&mut tape, &mixed.u, &loss.d_logits_u, grads)?;
    }
    tape.backward(model, grads);
    Ok(MixMatchOutput {
        total: loss.total,
        loss_x: loss.loss_x,
        loss_u: loss.loss_u,
    })
}

/// Sample, guess, mix and back-propagate. With no unlabeled examples the
/// unlabeled half is empty and only the labeled virtual batch is trained.
#[allow(clippy::too_many_arguments)]
pub fn mixmatch_step<R: Rng + ?Sized>(
    model: &Model,
    labeled: &[Example],
    unlabeled: &[Example],
    op: &OpSpec,
    tables: &AugmentTables<'_>,
    unlabeled_tables: &AugmentTables<'_>,
    config: &MixMatchConfig,
    vocab: &TokenVocab,
    max_len: usize,
    rng: &mut R,
    grads: &mut [f64],
) -> Result<MixMatchOutput> {
    if unlabeled.is_empty() {
        log::info!("no unlabeled examples in this step; training on the labeled batch only");
    }
    let plan = MixMatchPlan::sample(
        labeled,
        unlabeled,
        op,
        tables,
        unlabeled_tables,
        config,
        max_len,
        rng,
    )?;
    let guesses = guess_labels(
        model,
        &plan.unlabeled,
        plan.k,
        plan.lambda1.effective,
        config.temperature,
        tables.schema,
        vocab,
        max_len,
    )?;
    mixmatch_loss_with(
        model,
        &plan,
        &guesses,
        config,
        tables.schema,
        vocab,
        max_len,
        grads,
    )
}

#[cfg(test)]
mod tests;
