use super::head::PredictionBatch;
use crate::corpus::BatchLabels;
use crate::error::{Error, Result};

const PROB_FLOOR: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-6;

/// Soft label rows aligned with prediction rows; `None` rows are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftTargets {
    pub classes: usize,
    pub rows: Vec<Option<Vec<f64>>>,
}

pub fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

impl SoftTargets {
    pub fn new(classes: usize, rows: Vec<Option<Vec<f64>>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            let Some(r) = r else { continue };
            if r.len() != classes {
                return Err(Error::Shape(format!(
                    "target row {i} has {} classes, expected {classes}",
                    r.len()
                )));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL || r.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::Numeric(format!(
                    "target row {i} is not a distribution (sum {s})"
                )));
            }
        }
        Ok(Self { classes, rows })
    }

    /// One-hot rows from batch labels.
    pub fn from_labels(labels: &BatchLabels, classes: usize) -> Self {
        let ids = match labels {
            BatchLabels::Tags(t) => t,
            BatchLabels::Classes(c) => c,
        };
        Self {
            classes,
            rows: ids.iter().map(|l| l.map(|c| one_hot(c, classes))).collect(),
        }
    }

    pub fn active_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }
}

/// A scalar loss and its gradient with respect to the prediction logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub d_logits: Vec<f64>,
    /// Number of rows that contributed.
    pub rows: usize,
    /// Set when a probability was floored before taking its log.
    pub clamped: bool,
}

impl LossOutput {
    pub fn scale(mut self, w: f64) -> Self {
        self.value *= w;
        self.d_logits.iter_mut().for_each(|g| *g *= w);
        self
    }
}

fn check_rows(pred: &PredictionBatch, t: &SoftTargets) -> Result<()> {
    if t.classes != pred.classes || t.rows.len() != pred.num_rows() {
        return Err(Error::Shape(format!(
            "targets {}×{} do not match predictions {}×{}",
            t.rows.len(),
            t.classes,
            pred.num_rows(),
            pred.classes
        )));
    }
    Ok(())
}

/// Mean over active rows of `-Σ y_c ln p_c`.
pub fn cross_entropy(pred: &PredictionBatch, targets: &SoftTargets) -> Result<LossOutput> {
    check_rows(pred, targets)?;
    let c = pred.classes;
    let n = targets.active_rows();
    let mut d_logits = vec![0.0; pred.logits.len()];
    let mut value = 0.0;
    let mut clamped = false;
    if n == 0 {
        return Ok(LossOutput {
            value,
            d_logits,
            rows: 0,
            clamped,
        });
    }
    let inv = 1.0 / n as f64;
    for (r, y) in targets.rows.iter().enumerate() {
        let Some(y) = y else { continue };
        let z = &pred.logits[r * c..(r + 1) * c];
        let p = pred.row(r);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let ysum: f64 = y.iter().sum();
        for j in 0..c {
            if y[j] > 0.0 {
                let mut lp = z[j] - lse;
                if lp < PROB_FLOOR.ln() {
                    lp = PROB_FLOOR.ln();
                    clamped = true;
                }
                value -= y[j] * lp;
            }
            d_logits[r * c + j] = (p[j] * ysum - y[j]) * inv;
        }
    }
    if clamped {
        log::warn!("cross-entropy clamped a probability at {PROB_FLOOR}");
    }
    Ok(LossOutput {
        value: value * inv,
        d_logits,
        rows: n,
        clamped,
    })
}

/// `Σ_rows ‖q − p‖² / (classes · rows)` over active rows.
pub fn brier(pred: &PredictionBatch, guesses: &SoftTargets) -> Result<LossOutput> {
    check_rows(pred, guesses)?;
    let c = pred.classes;
    let n = guesses.active_rows();
    let mut d_logits = vec![0.0; pred.logits.len()];
    let mut value = 0.0;
    if n == 0 {
        return Ok(LossOutput {
            value,
            d_logits,
            rows: 0,
            clamped: false,
        });
    }
    let norm = 1.0 / (c as f64 * n as f64);
    for (r, q) in guesses.rows.iter().enumerate() {
        let Some(q) = q else { continue };
        let p = pred.row(r);
        let dp: Vec<f64> = p
            .iter()
            .zip(q)
            .map(|(pv, qv)| 2.0 * (pv - qv) * norm)
            .collect();
        value += p
            .iter()
            .zip(q)
            .map(|(pv, qv)| (pv - qv) * (pv - qv))
            .sum::<f64>();
        let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
        for j in 0..c {
            d_logits[r * c + j] = p[j] * (dp[j] - dot);
        }
    }
    Ok(LossOutput {
        value: value * norm,
        d_logits,
        rows: n,
        clamped: false,
    })
}
