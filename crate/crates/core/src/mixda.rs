//! Interpolation of encodings and labels, and the MixDA training step.
//!
//! An augmented example is never used on its own: its encoding is mixed
//! with the original's, `λ·enc(x) + (1−λ)·enc(x_aug)`, and the labels are
//! mixed the same way over the aligned slot grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{align, augment, AlignedPair, AugmentFlag, AugmentTables, OpSpec};
use crate::corpus::{Batch, Example, Schema, SlotSequence, TokenVocab};
use crate::error::{Error, Result};
use crate::model::{cross_entropy, EncodedBatch, Model, RowSource, SoftTargets, Tape};
use crate::sampling::beta_sample;

const ROW_SUM_TOL: f64 = 1e-6;

/// An interpolation coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixLambda {
    /// The Beta draw.
    pub raw: f64,
    /// The value used, after the optional `max(λ, 1−λ)` adjustment.
    pub effective: f64,
    /// Beta parameter; 0 for fixed values.
    pub alpha: f64,
}

impl MixLambda {
    pub fn draw<R: Rng + ?Sized>(alpha: f64, max_adjust: bool, rng: &mut R) -> Result<Self> {
        let raw = beta_sample(alpha, rng)?;
        let effective = if max_adjust { raw.max(1.0 - raw) } else { raw };
        Ok(Self {
            raw,
            effective,
            alpha,
        })
    }

    pub fn fixed(value: f64) -> Self {
        Self {
            raw: value,
            effective: value,
            alpha: 0.0,
        }
    }
}

/// `λ·e1 + (1−λ)·e2`.
pub fn interpolate_encodings(
    e1: &EncodedBatch,
    e2: &EncodedBatch,
    lambda: f64,
) -> Result<EncodedBatch> {
    interpolate_encodings_rowwise(e1, e2, &vec![lambda; e1.size])
}

/// Row `b` is `λ_b·e1[b] + (1−λ_b)·e2[b]`.
///
/// The mask of the result is the union of the parents' masks (parents with
/// weight zero excluded): aligned pairs have pads on one side where the
/// other has a token, and such a slot is still partly present. Pad
/// encodings are zero, so the mixed value there is the scaled real side.
pub fn interpolate_encodings_rowwise(
    e1: &EncodedBatch,
    e2: &EncodedBatch,
    lambdas: &[f64],
) -> Result<EncodedBatch> {
    if !e1.same_shape(e2) {
        return Err(Error::Shape(format!(
            "cannot interpolate {}×{}×{} with {}×{}×{}",
            e1.size, e1.max_len, e1.dim, e2.size, e2.max_len, e2.dim
        )));
    }
    if lambdas.len() != e1.size {
        return Err(Error::Shape(format!(
            "{} coefficients for {} rows",
            lambdas.len(),
            e1.size
        )));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Numeric(format!(
            "interpolation coefficient {bad} outside [0, 1]"
        )));
    }
    let n = e1.max_len * e1.dim;
    let mut data = Vec::with_capacity(e1.data.len());
    let mut sources = Vec::with_capacity(e1.size);
    let mut mask = Vec::with_capacity(e1.mask.len());
    for (b, &l) in lambdas.iter().enumerate() {
        mask.extend(
            e1.row_mask(b)
                .iter()
                .zip(e2.row_mask(b))
                .map(|(m1, m2)| (*m1 && l > 0.0) || (*m2 && l < 1.0)),
        );
        data.extend(
            e1.row(b)
                .iter()
                .zip(e2.row(b))
                .map(|(x, y)| l * x + (1.0 - l) * y),
        );
        let weighted = |src: &[RowSource], w: f64| {
            src.iter()
                .map(|s| RowSource {
                    weight: s.weight * w,
                    ..s.clone()
                })
                .collect::<Vec<_>>()
        };
        let mut s = weighted(&e1.sources[b], l);
        s.extend(weighted(&e2.sources[b], 1.0 - l));
        sources.push(s);
    }
    debug_assert_eq!(data.len(), e1.size * n);
    Ok(EncodedBatch {
        size: e1.size,
        max_len: e1.max_len,
        dim: e1.dim,
        data,
        mask,
        sources,
    })
}

/// Mixes two label rows. A row missing on one side (a pad slot or an
/// unlabeled position) yields the other side's row unchanged, unless that
/// side has weight zero.
pub fn mix_label_rows(
    a: Option<&[f64]>,
    b: Option<&[f64]>,
    lambda: f64,
) -> Result<Option<Vec<f64>>> {
    let a = a.filter(|_| lambda > 0.0);
    let b = b.filter(|_| lambda < 1.0);
    let row = match (a, b) {
        (Some(a), Some(b)) => {
            if a.len() != b.len() {
                return Err(Error::Shape(format!(
                    "label rows of {} and {} classes",
                    a.len(),
                    b.len()
                )));
            }
            a.iter()
                .zip(b)
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                .collect()
        }
        (Some(a), None) => a.to_vec(),
        (None, Some(b)) => b.to_vec(),
        (None, None) => return Ok(None),
    };
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::Numeric(format!("mixed label row sums to {s}")));
    }
    Ok(Some(row))
}

/// Mixes label rows with one coefficient per example; rows are grouped
/// evenly, `rows / lambdas.len()` per example.
pub fn interpolate_labels(
    y1: &SoftTargets,
    y2: &SoftTargets,
    lambdas: &[f64],
) -> Result<SoftTargets> {
    if y1.classes != y2.classes || y1.rows.len() != y2.rows.len() {
        return Err(Error::Shape("label structures differ".into()));
    }
    if lambdas.is_empty() || !y1.rows.len().is_multiple_of(lambdas.len()) {
        return Err(Error::Shape(format!(
            "{} label rows cannot be split over {} examples",
            y1.rows.len(),
            lambdas.len()
        )));
    }
    let per = y1.rows.len() / lambdas.len();
    let rows = y1
        .rows
        .iter()
        .zip(&y2.rows)
        .enumerate()
        .map(|(r, (a, b))| mix_label_rows(a.as_deref(), b.as_deref(), lambdas[r / per]))
        .collect::<Result<Vec<_>>>()?;
    Ok(SoftTargets {
        classes: y1.classes,
        rows,
    })
}

/// How λ is drawn in MixDA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct MixDaConfig {
    pub alpha: f64,
    /// Use `max(λ, 1−λ)` so the mix stays nearer the original.
    pub max_adjust: bool,
    /// One λ for the whole batch instead of one per example.
    pub per_batch: bool,
    /// Skip sampling and use this value (tests and ablations).
    pub fixed_lambda: Option<f64>,
}

impl Default for MixDaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            max_adjust: true,
            per_batch: false,
            fixed_lambda: None,
        }
    }
}

impl MixDaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if let Some(l) = self.fixed_lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("fixed lambda {l} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MixLambda> {
        match self.fixed_lambda {
            Some(l) => Ok(MixLambda::fixed(l)),
            None => MixLambda::draw(self.alpha, self.max_adjust, rng),
        }
    }
}

/// One example paired with an augmentation of itself.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedPair {
    pub pair: AlignedPair,
    pub flags: Vec<AugmentFlag>,
    /// True when the augmentation changed nothing (or was discarded).
    pub noop: bool,
}

/// Augments and aligns. Results that would not fit `max_len` (CLS included)
/// are discarded in favour of the original.
pub fn augment_pair<R: Rng + ?Sized>(
    example: &Example,
    op: &OpSpec,
    tables: &AugmentTables<'_>,
    max_len: usize,
    rng: &mut R,
) -> Result<AugmentedPair> {
    let aug = augment(example, op, tables, rng)?;
    let mut flags = aug.flags.clone();
    if aug.is_noop() {
        return Ok(AugmentedPair {
            pair: AlignedPair::identity(example),
            flags,
            noop: true,
        });
    }
    let pair = align(example, &aug)?;
    if pair.len() + 1 > max_len {
        flags.push(AugmentFlag::Overlength);
        return Ok(AugmentedPair {
            pair: AlignedPair::identity(example),
            flags,
            noop: true,
        });
    }
    Ok(AugmentedPair {
        pair,
        flags,
        noop: false,
    })
}

/// Batches for both sides of aligned pairs, laid over the same slot grid.
pub fn pair_batches(
    pairs: &[&AlignedPair],
    schema: &Schema,
    vocab: &TokenVocab,
    max_len: usize,
    labeled: bool,
) -> Result<(Batch, Batch)> {
    let (xs, augs): (Vec<SlotSequence>, Vec<SlotSequence>) = pairs
        .iter()
        .map(|p| p.slot_sequences(schema, labeled))
        .unzip();
    let tagging = schema.is_tagging();
    Ok((
        Batch::from_slots(&xs, vocab, max_len, tagging)?,
        Batch::from_slots(&augs, vocab, max_len, tagging)?,
    ))
}

/// Sampled inputs of one MixDA step, kept apart from the computation so a
/// step can be replayed exactly.
#[derive(Clone, Debug)]
pub struct MixDaPlan {
    pub pairs: Vec<AugmentedPair>,
    pub lambdas: Vec<MixLambda>,
}

impl MixDaPlan {
    pub fn sample<R: Rng + ?Sized>(
        examples: &[Example],
        op: &OpSpec,
        tables: &AugmentTables<'_>,
        config: &MixDaConfig,
        max_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let pairs = examples
            .iter()
            .map(|e| augment_pair(e, op, tables, max_len, rng))
            .collect::<Result<Vec<_>>>()?;
        let shared = if config.per_batch {
            Some(config.draw(rng)?)
        } else {
            None
        };
        let mut lambdas = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let l = match shared {
                Some(l) => l,
                None => config.draw(rng)?,
            };
            lambdas.push(if p.noop { MixLambda::fixed(1.0) } else { l });
        }
        Ok(Self { pairs, lambdas })
    }

    /// Every example paired with itself at λ = 1.
    pub fn identity(examples: &[Example]) -> Self {
        Self {
            pairs: examples
                .iter()
                .map(|e| AugmentedPair {
                    pair: AlignedPair::identity(e),
                    flags: Vec::new(),
                    noop: true,
                })
                .collect(),
            lambdas: vec![MixLambda::fixed(1.0); examples.len()],
        }
    }

    pub fn effective(&self) -> Vec<f64> {
        self.lambdas.iter().map(|l| l.effective).collect()
    }

    pub fn noops(&self) -> usize {
        self.pairs.iter().filter(|p| p.noop).count()
    }
}

/// Interpolated encodings and labels of a planned batch.
pub struct MixedBatch {
    pub encoding: EncodedBatch,
    pub targets: SoftTargets,
}

/// Encodes both sides of every pair on `tape` and interpolates them.
#[allow(clippy::too_many_arguments)]
pub fn mix_pairs(
    model: &Model,
    tape: &mut Tape,
    pairs: &[&AlignedPair],
    lambdas: &[f64],
    schema: &Schema,
    vocab: &TokenVocab,
    max_len: usize,
    labeled: bool,
) -> Result<MixedBatch> {
    let (x, xa) = pair_batches(pairs, schema, vocab, max_len, labeled)?;
    let e1 = model.encode(&x, tape)?;
    let e2 = model.encode(&xa, tape)?;
    let encoding = interpolate_encodings_rowwise(&e1, &e2, lambdas)?;
    let c = schema.num_classes();
    let targets = interpolate_labels(
        &SoftTargets::from_labels(&x.labels, c),
        &SoftTargets::from_labels(&xa.labels, c),
        lambdas,
    )?;
    Ok(MixedBatch { encoding, targets })
}

/// Loss of one MixDA step; gradients are added into `grads`.
#[derive(Clone, Debug)]
pub struct MixDaOutput {
    pub loss: f64,
    pub noops: usize,
}

/// Cross-entropy on the interpolated batch described by `plan`, with
/// gradients through both parents of every interpolation.
pub fn mixda_loss(
    model: &Model,
    plan: &MixDaPlan,
    schema: &Schema,
    vocab: &TokenVocab,
    max_len: usize,
    grads: &mut [f64],
) -> Result<MixDaOutput> {
    let mut tape = model.tape();
    let pairs: Vec<&AlignedPair> = plan.pairs.iter().map(|p| &p.pair).collect();
    let mixed = mix_pairs(
        model,
        &mut tape,
        &pairs,
        &plan.effective(),
        schema,
        vocab,
        max_len,
        true,
    )?;
    let pred = model.predict(&mixed.encoding)?;
    let out = cross_entropy(&pred, &mixed.targets)?;
    model.backward_from_logits(&mut tape, &mixed.encoding, &out.d_logits, grads)?;
    tape.backward(model, grads);
    Ok(MixDaOutput {
        loss: out.value,
        noops: plan.noops(),
    })
}

/// Augment, align, draw λ, interpolate, and back-propagate for a batch.
#[allow(clippy::too_many_arguments)]
pub fn mixda_step<R: Rng + ?Sized>(
    model: &Model,
    examples: &[Example],
    op: &OpSpec,
    tables: &AugmentTables<'_>,
    config: &MixDaConfig,
    vocab: &TokenVocab,
    max_len: usize,
    rng: &mut R,
    grads: &mut [f64],
) -> Result<MixDaOutput> {
    let plan = MixDaPlan::sample(examples, op, tables, config, max_len, rng)?;
    mixda_loss(model, &plan, tables.schema, vocab, max_len, grads)
}
