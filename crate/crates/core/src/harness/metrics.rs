use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::Result;

/// Micro-averaged exact-match chunk scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChunkScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl ChunkScores {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            correct,
            predicted,
            gold,
        }
    }
}

/// Scores predicted chunks against gold chunks, sentence by sentence.
pub fn chunk_scores(pred: &[Vec<Chunk>], gold: &[Vec<Chunk>]) -> ChunkScores {
    let (mut correct, mut predicted, mut total) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let p: HashSet<&Chunk> = p.iter().collect();
        let g: HashSet<&Chunk> = g.iter().collect();
        correct += p.intersection(&g).count();
        predicted += p.len();
        total += g.len();
    }
    ChunkScores::from_counts(correct, predicted, total)
}

/// Accuracy and unweighted mean of per-class F1 over all `classes`.
/// A class never gold and never predicted scores 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
}

pub fn class_scores(pred: &[usize], gold: &[usize], classes: usize) -> ClassScores {
    let mut tp = vec![0usize; classes];
    let mut pc = vec![0usize; classes];
    let mut gc = vec![0usize; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        pc[p] += 1;
        gc[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..classes)
        .map(|c| ChunkScores::from_counts(tp[c], pc[c], gc[c]).f1)
        .collect();
    let n = pred.len().min(gold.len());
    ClassScores {
        accuracy: if n == 0 {
            0.0
        } else {
            tp.iter().sum::<usize>() as f64 / n as f64
        },
        macro_f1: if classes == 0 {
            0.0
        } else {
            per_class_f1.iter().sum::<f64>() / classes as f64
        },
        per_class_f1,
    }
}

/// One line of a metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

impl MetricsRecord {
    pub fn new(epoch: usize, split: &str, metric: &str, value: f64) -> Self {
        Self {
            epoch,
            split: split.into(),
            metric: metric.into(),
            value,
        }
    }
}

pub fn write_metrics(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
