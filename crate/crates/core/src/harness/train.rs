use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{Method, Task, TrainConfig};
use super::metrics::{
    chunk_scores, class_scores, write_metrics, ChunkScores, ClassScores, MetricsRecord,
};
use crate::augment::{AugmentTables, PolarityLexicon};
use crate::corpus::{
    extract_chunks, load_spancls, load_tagging, load_unlabeled, pad_batch, repair_iob, Dataset,
    Example, Schema, TokenVocab, DEFAULT_DEV_SIZE,
};
use crate::error::{Error, Result};
use crate::mixda::{augment_pair, mixda_step};
use crate::mixmatch::mixmatch_step;
use crate::model::{argmax, load_checkpoint, save_checkpoint, Adam, Model};
use crate::sampling::{
    build_span_table, build_tfidf, cooccurrence_embeddings, load_embeddings, RngStream,
    SimilarityIndex, SpanTable, TfidfTable,
};

/// Labeled, development and unlabeled examples for one run.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Dataset,
    pub dev: Dataset,
    pub unlabeled: Vec<Example>,
}

impl TrainData {
    /// Loads the files named in `config`. Without a dev file the last
    /// examples of the training file are held out.
    pub fn load(config: &TrainConfig) -> Result<Self> {
        let path = config
            .train
            .as_deref()
            .ok_or_else(|| Error::Config("no training file given".into()))?;
        let train = load_labeled(path, config.task, None)?;
        let (train, dev) = match &config.dev {
            Some(p) => {
                let dev = load_labeled(p, config.task, Some(&train.schema))?;
                (train, dev)
            }
            None => train.split_tail(DEFAULT_DEV_SIZE)?,
        };
        let unlabeled = match &config.unlabeled {
            Some(p) => load_unlabeled(p, &train.schema)?,
            None => Vec::new(),
        };
        Ok(Self {
            train,
            dev,
            unlabeled,
        })
    }
}

/// Loads a labeled file, reusing `schema`'s label set when given.
pub fn load_labeled(path: &Path, task: Task, schema: Option<&Schema>) -> Result<Dataset> {
    match task {
        Task::Tagging => load_tagging(path, schema.and_then(Schema::tag_vocab)),
        Task::Spancls => load_spancls(path, schema.and_then(Schema::label_vocab)),
    }
}

/// Sampling tables used by the augmentation operators.
pub struct AugmentResources {
    pub tfidf: TfidfTable,
    pub words: SimilarityIndex,
    pub spans: Option<SpanTable>,
    pub polarity: Option<PolarityLexicon>,
}

impl AugmentResources {
    /// TF-IDF and word vectors cover labeled and unlabeled text; the span
    /// table comes from the labeled set. Word vectors are read from the
    /// embeddings file when given, else built from co-occurrence counts.
    pub fn build(config: &TrainConfig, data: &TrainData) -> Result<Self> {
        let sentences: Vec<Vec<String>> = data
            .train
            .sentences()
            .chain(data.unlabeled.iter().map(Example::tokens))
            .map(<[String]>::to_vec)
            .collect();
        let tfidf = build_tfidf(&sentences)?;
        let (items, vectors) = match &config.embeddings {
            Some(p) => load_embeddings(p)?,
            None => cooccurrence_embeddings(&sentences, 2, 512),
        };
        let words = SimilarityIndex::new(items, vectors)?;
        let spans = if config.op.is_span_level() {
            let mut table = build_span_table(&data.train)?;
            table.attach_encodings(|spans| {
                Ok(spans.iter().map(|s| mean_vector(&words, s)).collect())
            })?;
            Some(table)
        } else {
            None
        };
        let polarity = config
            .polarity_lexicon
            .as_ref()
            .map(PolarityLexicon::load)
            .transpose()?;
        Ok(Self {
            tfidf,
            words,
            spans,
            polarity,
        })
    }

    pub fn tables<'a>(&'a self, schema: &'a Schema) -> AugmentTables<'a> {
        AugmentTables {
            schema,
            tfidf: Some(&self.tfidf),
            words: Some(&self.words),
            spans: self.spans.as_ref(),
            polarity: self.polarity.as_ref(),
        }
    }
}

fn mean_vector(words: &SimilarityIndex, tokens: &[String]) -> Vec<f64> {
    let vs: Vec<&[f64]> = tokens.iter().filter_map(|t| words.vector(t)).collect();
    let dim = vs.first().map_or(0, |v| v.len());
    let mut out = vec![0.0; dim];
    for v in &vs {
        out.iter_mut()
            .zip(*v)
            .for_each(|(a, b)| *a += b / vs.len() as f64);
    }
    out
}

/// Scores on a labeled set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EvalResult {
    Tagging(ChunkScores),
    SpanCls(ClassScores),
}

impl EvalResult {
    /// F1 for tagging, Macro-F1 for span classification.
    pub fn primary(&self) -> f64 {
        match self {
            EvalResult::Tagging(s) => s.f1,
            EvalResult::SpanCls(s) => s.macro_f1,
        }
    }

    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        match self {
            EvalResult::Tagging(s) => vec![
                ("precision", s.precision),
                ("recall", s.recall),
                ("f1", s.f1),
            ],
            EvalResult::SpanCls(s) => vec![("accuracy", s.accuracy), ("macro-f1", s.macro_f1)],
        }
    }

    pub fn records(&self, epoch: usize, split: &str) -> Vec<MetricsRecord> {
        self.metrics()
            .into_iter()
            .map(|(m, v)| MetricsRecord::new(epoch, split, m, v))
            .collect()
    }
}

const EVAL_BATCH: usize = 64;

/// Argmax tag sequences for tagging datasets, repaired to valid IOB.
pub fn predict_tags(model: &Model, vocab: &TokenVocab, data: &Dataset) -> Result<Vec<Vec<usize>>> {
    let tv = data
        .schema
        .tag_vocab()
        .ok_or_else(|| Error::Config("tag prediction on a span dataset".into()))?;
    let max_len = model.config().max_len;
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.examples.chunks(EVAL_BATCH) {
        let batch = pad_batch(chunk, &data.schema, vocab, max_len)?;
        let pred = model.predict_batch(&batch)?;
        for (b, ex) in chunk.iter().enumerate() {
            let raw: Vec<usize> = (0..ex.len())
                .map(|t| pred.argmax(b * max_len + t + 1))
                .collect();
            out.push(repair_iob(&raw, tv));
        }
    }
    Ok(out)
}

/// Argmax classes for span datasets.
pub fn predict_classes(model: &Model, vocab: &TokenVocab, data: &Dataset) -> Result<Vec<usize>> {
    let max_len = model.config().max_len;
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.examples.chunks(EVAL_BATCH) {
        let batch = pad_batch(chunk, &data.schema, vocab, max_len)?;
        let pred = model.predict_batch(&batch)?;
        out.extend((0..chunk.len()).map(|b| argmax(pred.row(b))));
    }
    Ok(out)
}

pub fn evaluate(model: &Model, vocab: &TokenVocab, data: &Dataset) -> Result<EvalResult> {
    match &data.schema {
        Schema::Tagging(tv) => {
            let pred = predict_tags(model, vocab, data)?;
            let pred_chunks = pred
                .iter()
                .map(|t| extract_chunks(t, tv))
                .collect::<Result<Vec<_>>>()?;
            let gold = data
                .examples
                .iter()
                .map(|e| e.targets(&data.schema))
                .collect::<Vec<_>>();
            Ok(EvalResult::Tagging(chunk_scores(&pred_chunks, &gold)))
        }
        Schema::SpanCls(lv) => {
            let pred = predict_classes(model, vocab, data)?;
            let gold: Vec<usize> = data
                .examples
                .iter()
                .map(|e| match e {
                    Example::Span(s) => s.label,
                    Example::Tagged(_) => 0,
                })
                .collect();
            Ok(EvalResult::SpanCls(class_scores(&pred, &gold, lv.len())))
        }
    }
}

/// Result of a training run.
pub struct TrainOutcome {
    /// Best model on dev, as stored in a checkpoint (f32 precision).
    pub model: Model,
    pub vocab: TokenVocab,
    pub schema: Schema,
    pub best_epoch: usize,
    pub best_dev: EvalResult,
    pub history: Vec<MetricsRecord>,
}

impl TrainOutcome {
    pub fn checkpoint_meta(&self, config: &TrainConfig) -> serde_json::Value {
        serde_json::json!({
            "vocab": self.vocab,
            "schema": self.schema,
            "train-config": config,
            "best-epoch": self.best_epoch,
            "dev": self.best_dev.primary(),
        })
    }
}

/// Model and the data vocabularies stored with it.
pub struct Trained {
    pub model: Model,
    pub vocab: TokenVocab,
    pub schema: Schema,
    pub meta: serde_json::Value,
}

pub fn load_trained(path: &Path) -> Result<Trained> {
    let (model, meta) = load_checkpoint(path)?;
    let field = |k: &str| {
        meta.get(k)
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("metadata lacks `{k}`")))
    };
    let vocab: TokenVocab = serde_json::from_value(field("vocab")?)?;
    let schema: Schema = serde_json::from_value(field("schema")?)?;
    Ok(Trained {
        model,
        vocab,
        schema,
        meta,
    })
}

/// Loads the configured files, trains, and writes the metrics and
/// checkpoint files when configured.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let data = TrainData::load(config)?;
    let outcome = train_on(config, &data)?;
    if let Some(p) = &config.metrics {
        write_metrics(p, &outcome.history)?;
    }
    if let Some(p) = &config.checkpoint {
        save_checkpoint(p, &outcome.model, &outcome.checkpoint_meta(config))?;
    }
    Ok(outcome)
}

/// Cycles through the unlabeled examples in a fresh order every pass.
struct UnlabeledStream<'a> {
    examples: &'a [Example],
    rng: RngStream,
    order: Vec<usize>,
    next: usize,
    pass: u64,
}

impl<'a> UnlabeledStream<'a> {
    fn new(examples: &'a [Example], rng: RngStream) -> Self {
        Self {
            examples,
            rng,
            order: Vec::new(),
            next: 0,
            pass: 0,
        }
    }

    fn take(&mut self, n: usize) -> Vec<Example> {
        let mut out = Vec::with_capacity(n);
        if self.examples.is_empty() {
            return out;
        }
        while out.len() < n {
            if self.next == self.order.len() {
                self.order = (0..self.examples.len()).collect();
                self.order.shuffle(&mut self.rng.child("pass", self.pass));
                self.pass += 1;
                self.next = 0;
            }
            out.push(self.examples[self.order[self.next]].clone());
            self.next += 1;
        }
        out
    }
}

/// Trains for the configured number of epochs and keeps the model with the
/// best dev score (the earliest epoch on ties).
pub fn train_on(config: &TrainConfig, data: &TrainData) -> Result<TrainOutcome> {
    config.validate_data_free()?;
    if data.train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if config.method == Method::Mixmatch && data.unlabeled.is_empty() {
        log::warn!("mixmatch without unlabeled examples: the unlabeled loss is always empty");
    }
    let schema = data.train.schema.clone();
    if schema.is_tagging() != (config.task == Task::Tagging) {
        return Err(Error::Config(
            "task does not match the training data".into(),
        ));
    }
    let vocab = TokenVocab::build(
        data.train
            .sentences()
            .chain(data.unlabeled.iter().map(Example::tokens)),
    );
    let resources = if config.method == Method::Baseline {
        None
    } else {
        Some(AugmentResources::build(config, data)?)
    };
    let root = RngStream::new(config.seed);
    let mut model = Model::new(
        config.model(vocab.len(), schema.num_classes()),
        &mut root.child("init", 0),
    )?;
    model.enable_dropout(root.child("dropout", 0));
    let mut opt = Adam::new(config.adam(), model.num_params());
    let mut unlabeled = UnlabeledStream::new(&data.unlabeled, root.child("unlabeled", 0));
    let mut history = Vec::new();
    let mut best: Option<(usize, EvalResult, Model)> = None;
    let op = config.op_spec();
    let (b, max_len) = (config.batch_size, config.max_len);

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut root.child("order", epoch as u64));
        let mut rng = root.child("steps", epoch as u64);
        let (mut total, mut total_x, mut total_u, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for idx in order.chunks(b) {
            let batch: Vec<Example> = idx
                .iter()
                .map(|&i| data.train.examples[i].clone())
                .collect();
            let mut grads = model.zero_grads();
            let tables = resources.as_ref().map(|r| r.tables(&schema));
            let loss = match (config.method, &tables) {
                (Method::Baseline, _) | (_, None) => model
                    .supervised_loss(&pad_batch(&batch, &schema, &vocab, max_len)?, &mut grads)?,
                (Method::Da, Some(t)) => {
                    let mut all = batch.clone();
                    for ex in &batch {
                        let p = augment_pair(ex, &op, t, max_len, &mut rng)?;
                        if !p.noop {
                            all.push(p.pair.augmented);
                        }
                    }
                    model
                        .supervised_loss(&pad_batch(&all, &schema, &vocab, max_len)?, &mut grads)?
                }
                (Method::Mixmatch, Some(t)) if epoch > config.guess_warmup_epochs => {
                    let u = unlabeled.take(batch.len());
                    let out = mixmatch_step(
                        &model,
                        &batch,
                        &u,
                        &op,
                        t,
                        t,
                        &config.mixmatch(),
                        &vocab,
                        max_len,
                        &mut rng,
                        &mut grads,
                    )?;
                    total_x += out.loss_x;
                    total_u += out.loss_u;
                    out.total
                }
                (Method::Mixda | Method::Mixmatch, Some(t)) => {
                    let out = mixda_step(
                        &model,
                        &batch,
                        &op,
                        t,
                        &config.mixda(),
                        &vocab,
                        max_len,
                        &mut rng,
                        &mut grads,
                    )?;
                    total_x += out.loss;
                    out.loss
                }
            };
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss} in epoch {epoch}"
                )));
            }
            opt.step(&mut model, &mut grads)?;
            total += loss;
            steps += 1;
        }
        let n = steps as f64;
        history.push(MetricsRecord::new(epoch, "train", "loss", total / n));
        if config.method == Method::Mixmatch {
            history.push(MetricsRecord::new(epoch, "train", "loss-x", total_x / n));
            history.push(MetricsRecord::new(epoch, "train", "loss-u", total_u / n));
        }
        if !model.is_finite() {
            return Err(Error::Numeric(format!(
                "parameters became non-finite in epoch {epoch}"
            )));
        }
        let snapshot = model.rounded_to_f32();
        let dev = evaluate(&snapshot, &vocab, &data.dev)?;
        history.extend(dev.records(epoch, "dev"));
        log::info!(
            "epoch {epoch}: loss {:.4}, dev {:.4}",
            total / n,
            dev.primary()
        );
        if best
            .as_ref()
            .is_none_or(|(_, d, _)| dev.primary() > d.primary())
        {
            best = Some((epoch, dev, snapshot));
        }
    }
    let (best_epoch, best_dev, mut model) = best.expect("at least one epoch");
    model.disable_dropout();
    history.push(MetricsRecord::new(
        best_epoch,
        "best-dev",
        best_dev.metrics()[0].0,
        best_dev.metrics()[0].1,
    ));
    for (m, v) in best_dev.metrics() {
        if m != best_dev.metrics()[0].0 {
            history.push(MetricsRecord::new(best_epoch, "best-dev", m, v));
        }
    }
    Ok(TrainOutcome {
        model,
        vocab,
        schema,
        best_epoch,
        best_dev,
        history,
    })
}

#[cfg(test)]
mod tests;
