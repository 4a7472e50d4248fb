use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::{DaOperator, OpSpec};
use crate::error::{Error, Result};
use crate::mixda::MixDaConfig;
use crate::mixmatch::MixMatchConfig;
use crate::model::{AdamConfig, HeadKind, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Tagging,
    Spancls,
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tagging" => Ok(Task::Tagging),
            "spancls" => Ok(Task::Spancls),
            _ => Err(Error::Config(format!(
                "unknown task `{s}` (tagging, spancls)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Supervised training on the labeled set.
    Baseline,
    /// Supervised training on each batch plus one augmentation of it.
    Da,
    /// Interpolated augmentation.
    Mixda,
    /// Interpolated augmentation plus guessed labels on unlabeled data.
    Mixmatch,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Baseline,
        Method::Da,
        Method::Mixda,
        Method::Mixmatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Da => "da",
            Method::Mixda => "mixda",
            Method::Mixmatch => "mixmatch",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}` (baseline, da, mixda, mixmatch)"
                ))
            })
    }
}

/// Everything a training run needs. Field names double as kebab-case keys
/// in JSON config files and command-line flags.
///
/// `lr` defaults to 1e-3, which suits the small encoder trained from
/// scratch; 5e-5 is the usual value when fine-tuning a large pre-trained
/// encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    pub method: Method,
    pub op: DaOperator,
    pub polarity_guard: bool,
    pub batch_size: usize,
    pub max_len: usize,
    pub lr: f64,
    pub clip_norm: Option<f64>,
    pub epochs: usize,
    pub dim: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// Beta parameter for MixDA.
    pub alpha: f64,
    pub max_adjust: bool,
    pub per_batch_lambda: bool,
    pub k: usize,
    pub temperature: f64,
    pub alpha_aug: f64,
    pub alpha_mix: f64,
    pub lambda_u: f64,
    /// Epochs trained with MixDA before label guessing starts.
    pub guess_warmup_epochs: usize,
    pub seed: u64,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    /// Word vectors for similarity-based operators ("V d" header format).
    pub embeddings: Option<PathBuf>,
    pub polarity_lexicon: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mm = MixMatchConfig::default();
        let md = MixDaConfig::default();
        Self {
            task: Task::Tagging,
            method: Method::Baseline,
            op: DaOperator::Tr,
            polarity_guard: false,
            batch_size: 32,
            max_len: 64,
            lr: 1e-3,
            clip_norm: Some(5.0),
            epochs: 20,
            dim: 64,
            layers: 2,
            ff_dim: 128,
            dropout: 0.0,
            alpha: md.alpha,
            max_adjust: md.max_adjust,
            per_batch_lambda: md.per_batch,
            k: mm.k,
            temperature: mm.temperature,
            alpha_aug: mm.alpha_aug,
            alpha_mix: mm.alpha_mix,
            lambda_u: mm.lambda_u,
            guess_warmup_epochs: 0,
            seed: 0,
            train: None,
            dev: None,
            unlabeled: None,
            embeddings: None,
            polarity_lexicon: None,
            metrics: None,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks values, including that the files each method needs are named.
    pub fn validate(&self) -> Result<()> {
        self.validate_data_free()?;
        if self.method == Method::Mixmatch && self.unlabeled.is_none() {
            return Err(Error::Config(
                "method mixmatch needs an unlabeled file".into(),
            ));
        }
        Ok(())
    }

    /// Checks the values that do not refer to files.
    pub fn validate_data_free(&self) -> Result<()> {
        let positive = [
            ("batch-size", self.batch_size),
            ("max-len", self.max_len),
            ("epochs", self.epochs),
            ("dim", self.dim),
            ("ff-dim", self.ff_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.max_len < 2 {
            return Err(Error::Config(
                "max-len must leave room for CLS and a token".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        self.mixda().validate()?;
        self.mixmatch().validate()?;
        self.adam_check()?;
        Ok(())
    }

    fn adam_check(&self) -> Result<()> {
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!(
                    "clip-norm must be positive, got {c}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn op_spec(&self) -> OpSpec {
        OpSpec::new(self.op).with_guard(self.polarity_guard)
    }

    pub fn mixda(&self) -> MixDaConfig {
        MixDaConfig {
            alpha: self.alpha,
            max_adjust: self.max_adjust,
            per_batch: self.per_batch_lambda,
            fixed_lambda: None,
        }
    }

    pub fn mixmatch(&self) -> MixMatchConfig {
        MixMatchConfig {
            k: self.k,
            temperature: self.temperature,
            alpha_aug: self.alpha_aug,
            alpha_mix: self.alpha_mix,
            lambda_u: self.lambda_u,
            fixed_lambda1: None,
            fixed_lambda2: None,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            clip_norm: self.clip_norm,
            ..Default::default()
        }
    }

    pub fn model(&self, vocab_size: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            max_len: self.max_len,
            dim: self.dim,
            layers: self.layers,
            ff_dim: self.ff_dim,
            num_classes,
            head: match self.task {
                Task::Tagging => HeadKind::Tagging,
                Task::Spancls => HeadKind::SpanCls,
            },
            dropout: self.dropout,
        }
    }
}
