use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::config::{Method, TrainConfig};
use super::train::{evaluate, train_on, TrainData};
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::sampling::RngStream;

/// A labeled-set size: a fixed count or the whole training set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SampleSize {
    Count(usize),
    Full,
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSize::Count(n) => write!(f, "{n}"),
            SampleSize::Full => f.write_str("full"),
        }
    }
}

impl FromStr for SampleSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(SampleSize::Full);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(SampleSize::Count(n)),
            _ => Err(Error::Config(format!("bad sample size `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct ExperimentPlan {
    pub sizes: Vec<SampleSize>,
    pub samples: usize,
    pub runs: usize,
    pub methods: Vec<Method>,
    /// Seeds the subsample draws; run `r` trains with seed `base + r`.
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            sizes: vec![
                SampleSize::Count(250),
                SampleSize::Count(500),
                SampleSize::Count(750),
                SampleSize::Count(1000),
                SampleSize::Full,
            ],
            samples: 3,
            runs: 5,
            methods: Method::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.sizes.is_empty() || self.methods.is_empty() || self.samples == 0 || self.runs == 0 {
            return Err(Error::Config("experiment plan has nothing to run".into()));
        }
        for s in &self.sizes {
            if let SampleSize::Count(n) = s {
                if *n > train_len {
                    return Err(Error::Config(format!(
                        "sample size {n} exceeds the {train_len} training examples"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_runs(&self) -> usize {
        self.sizes.len() * self.methods.len() * self.samples * self.runs
    }

    /// Indices of subsample `sample` at `size`. Depends only on the plan
    /// seed, never on the method.
    pub fn subsample(&self, size: SampleSize, sample_id: usize, train_len: usize) -> Vec<usize> {
        match size {
            SampleSize::Full => (0..train_len).collect(),
            SampleSize::Count(n) => {
                let mut rng = RngStream::new(self.seed)
                    .child("subsample", n as u64)
                    .child("sample", sample_id as u64);
                let mut idx = sample(&mut rng, train_len, n).into_vec();
                idx.sort_unstable();
                idx
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub size: SampleSize,
    pub method: Method,
    pub sample: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    /// Mean of `metric` per (size, method).
    pub fn means(&self, metric: &str) -> BTreeMap<(SampleSize, Method), f64> {
        let mut acc: BTreeMap<(SampleSize, Method), (f64, usize)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.metric == metric) {
            let e = acc.entry((r.size, r.method)).or_default();
            e.0 += r.value;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "size,method,sample,seed,metric,value")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.size,
                r.method.name(),
                r.sample,
                r.seed,
                r.metric,
                r.value
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Trains every (size, sample, method, run) combination and scores the best
/// dev checkpoint on `test`.
pub fn run_experiment(
    plan: &ExperimentPlan,
    base: &TrainConfig,
    data: &TrainData,
    test: &Dataset,
) -> Result<ExperimentTable> {
    plan.validate(data.train.len())?;
    base.validate_data_free()?;
    let mut table = ExperimentTable::default();
    for &size in &plan.sizes {
        for s in 0..plan.samples {
            let idx = plan.subsample(size, s, data.train.len());
            let subset = TrainData {
                train: data.train.subset(&idx),
                dev: data.dev.clone(),
                unlabeled: data.unlabeled.clone(),
            };
            for &method in &plan.methods {
                for r in 0..plan.runs {
                    let config = TrainConfig {
                        method,
                        seed: base.seed + r as u64,
                        metrics: None,
                        checkpoint: None,
                        ..base.clone()
                    };
                    let out = train_on(&config, &subset)?;
                    let scores = evaluate(&out.model, &out.vocab, test)?;
                    log::info!(
                        "size {size} sample {s} {} seed {}: test {:.4}",
                        method.name(),
                        config.seed,
                        scores.primary()
                    );
                    for (metric, value) in scores.metrics() {
                        table.rows.push(ExperimentRow {
                            size,
                            method,
                            sample: s,
                            seed: config.seed,
                            metric: metric.to_string(),
                            value,
                        });
                    }
                }
            }
        }
    }
    Ok(table)
}
