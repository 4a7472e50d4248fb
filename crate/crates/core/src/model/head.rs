use super::linalg::{bias_grad, input_grad, linear, softmax, weight_grad};
use super::params::{HeadKind, Model};
use super::tape::EncodedBatch;
use crate::error::{Error, Result};

/// Output distributions of the head.
///
/// Tagging yields one row per slot (`size × max_len` rows, pads included so
/// rows line up with batch positions); span classification yields one row
/// per example.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBatch {
    pub kind: HeadKind,
    pub size: usize,
    pub max_len: usize,
    pub classes: usize,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl PredictionBatch {
    pub fn num_rows(&self) -> usize {
        self.logits.len() / self.classes
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.probs[r * self.classes..(r + 1) * self.classes]
    }

    pub fn argmax(&self, r: usize) -> usize {
        argmax(self.row(r))
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl Model {
    fn head_inputs(&self, enc: &EncodedBatch) -> Result<Vec<f64>> {
        if enc.dim != self.config.dim {
            return Err(Error::Shape(format!(
                "encoding dim {} does not match model dim {}",
                enc.dim, self.config.dim
            )));
        }
        Ok(match self.config.head {
            HeadKind::Tagging => enc.data.clone(),
            HeadKind::SpanCls => (0..enc.size)
                .flat_map(|b| enc.vector(b, 0).to_vec())
                .collect(),
        })
    }

    /// Affine map plus softmax over the rows the head reads.
    pub fn predict(&self, enc: &EncodedBatch) -> Result<PredictionBatch> {
        let x = self.head_inputs(enc)?;
        let (d, c) = (self.config.dim, self.config.num_classes);
        let n = x.len() / d;
        let logits = linear(
            &x,
            n,
            &self.params[self.layout.head_w.clone()],
            &self.params[self.layout.head_b.clone()],
            d,
            c,
        );
        let probs = logits.chunks(c).flat_map(softmax).collect();
        Ok(PredictionBatch {
            kind: self.config.head,
            size: enc.size,
            max_len: enc.max_len,
            classes: c,
            logits,
            probs,
        })
    }

    /// Adds head parameter gradients and returns the gradient with respect
    /// to the encoding.
    pub fn head_backward(
        &self,
        enc: &EncodedBatch,
        d_logits: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        let x = self.head_inputs(enc)?;
        let (d, c) = (self.config.dim, self.config.num_classes);
        let n = x.len() / d;
        if d_logits.len() != n * c {
            return Err(Error::Shape(format!(
                "logit gradient has {} values, expected {}",
                d_logits.len(),
                n * c
            )));
        }
        weight_grad(
            &x,
            d_logits,
            n,
            d,
            c,
            &mut grads[self.layout.head_w.clone()],
        );
        bias_grad(d_logits, n, c, &mut grads[self.layout.head_b.clone()]);
        let dx = input_grad(d_logits, &self.params[self.layout.head_w.clone()], n, d, c);
        Ok(match self.config.head {
            HeadKind::Tagging => dx,
            HeadKind::SpanCls => {
                let mut out = vec![0.0; enc.data.len()];
                let row = enc.max_len * d;
                for b in 0..enc.size {
                    out[b * row..b * row + d].copy_from_slice(&dx[b * d..(b + 1) * d]);
                }
                out
            }
        })
    }
}
