//! Recorded forward passes and the encoding-level values built from them.

use super::encoder::RowCache;
use super::params::Model;
use crate::corpus::Batch;
use crate::error::{Error, Result};
use crate::sampling::RngStream;

/// One term of the linear combination that produced an encoded row.
#[derive(Clone, Debug, PartialEq)]
pub struct RowSource {
    /// Index of the recorded pass, `None` for an untracked (no-grad) pass.
    pub pass: Option<usize>,
    pub row: usize,
    pub weight: f64,
}

/// Encoder output of shape `size × max_len × dim`.
///
/// Every row is a weighted sum of rows produced by forward passes; raw
/// encodings have a single source of weight 1 and interpolations record
/// both parents. Pad slots hold zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedBatch {
    pub size: usize,
    pub max_len: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub mask: Vec<bool>,
    pub sources: Vec<Vec<RowSource>>,
}

impl EncodedBatch {
    pub fn row(&self, b: usize) -> &[f64] {
        let n = self.max_len * self.dim;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn vector(&self, b: usize, t: usize) -> &[f64] {
        &self.data[(b * self.max_len + t) * self.dim..][..self.dim]
    }

    pub fn row_mask(&self, b: usize) -> &[bool] {
        &self.mask[b * self.max_len..(b + 1) * self.max_len]
    }

    pub fn same_shape(&self, other: &EncodedBatch) -> bool {
        self.size == other.size && self.max_len == other.max_len && self.dim == other.dim
    }

    /// Selects rows in the given order.
    pub fn select(&self, rows: &[usize]) -> EncodedBatch {
        let n = self.max_len * self.dim;
        let mut data = Vec::with_capacity(rows.len() * n);
        let mut mask = Vec::with_capacity(rows.len() * self.max_len);
        let mut sources = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.row(r));
            mask.extend_from_slice(self.row_mask(r));
            sources.push(self.sources[r].clone());
        }
        EncodedBatch {
            size: rows.len(),
            max_len: self.max_len,
            dim: self.dim,
            data,
            mask,
            sources,
        }
    }

    /// Stacks batches with equal `max_len` and `dim`.
    pub fn concat(parts: &[&EncodedBatch]) -> Result<EncodedBatch> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of no batches".into()))?;
        let mut out = EncodedBatch {
            size: 0,
            max_len: first.max_len,
            dim: first.dim,
            data: Vec::new(),
            mask: Vec::new(),
            sources: Vec::new(),
        };
        for p in parts {
            if p.max_len != out.max_len || p.dim != out.dim {
                return Err(Error::Shape(format!(
                    "cannot concat L={} d={} with L={} d={}",
                    out.max_len, out.dim, p.max_len, p.dim
                )));
            }
            out.size += p.size;
            out.data.extend_from_slice(&p.data);
            out.mask.extend_from_slice(&p.mask);
            out.sources.extend(p.sources.iter().cloned());
        }
        Ok(out)
    }
}

struct Pass {
    size: usize,
    max_len: usize,
    rows: Vec<RowCache>,
    grad: Vec<f64>,
}

/// Records forward passes so gradients can flow back into the encoder
/// after arbitrary linear mixing of their outputs.
#[derive(Default)]
pub struct Tape {
    passes: Vec<Pass>,
    dropout: Option<RngStream>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose passes apply dropout drawn from `rng`.
    pub fn with_dropout(rng: RngStream) -> Self {
        Self {
            passes: Vec::new(),
            dropout: Some(rng),
        }
    }

    pub fn num_passes(&self) -> usize {
        self.passes.len()
    }

    /// Adds `d_enc` (same shape as `enc`) into the output gradients of the
    /// passes that produced `enc`, scaled by each source weight.
    pub fn accumulate(&mut self, enc: &EncodedBatch, d_enc: &[f64]) -> Result<()> {
        let n = enc.max_len * enc.dim;
        if d_enc.len() != enc.size * n {
            return Err(Error::Shape(format!(
                "gradient has {} values for an encoding of {}",
                d_enc.len(),
                enc.size * n
            )));
        }
        for (b, sources) in enc.sources.iter().enumerate() {
            let g = &d_enc[b * n..(b + 1) * n];
            for s in sources {
                let Some(pi) = s.pass else { continue };
                let pass = self
                    .passes
                    .get_mut(pi)
                    .ok_or_else(|| Error::Shape(format!("encoding refers to unknown pass {pi}")))?;
                if pass.max_len != enc.max_len || s.row >= pass.size {
                    return Err(Error::Shape(
                        "encoding does not match its recorded pass".into(),
                    ));
                }
                if s.weight == 0.0 {
                    continue;
                }
                for (a, &v) in pass.grad[s.row * n..(s.row + 1) * n].iter_mut().zip(g) {
                    *a += s.weight * v;
                }
            }
        }
        Ok(())
    }

    /// Runs the encoder backward for every recorded pass, adding into `grads`.
    pub fn backward(&self, model: &Model, grads: &mut [f64]) {
        let d = model.config.dim;
        for pass in &self.passes {
            let n = pass.max_len * d;
            for (b, cache) in pass.rows.iter().enumerate() {
                let g = &pass.grad[b * n..(b + 1) * n];
                let dy: Vec<f64> = cache
                    .slots
                    .iter()
                    .flat_map(|&t| g[t * d..(t + 1) * d].iter().copied())
                    .collect();
                if dy.iter().any(|&v| v != 0.0) {
                    model.backward_row(cache, &dy, grads);
                }
            }
        }
    }
}

impl Model {
    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.max_len > self.config.max_len {
            return Err(Error::Shape(format!(
                "batch length {} exceeds model max length {}",
                batch.max_len, self.config.max_len
            )));
        }
        let cells = batch.size * batch.max_len;
        if batch.token_ids.len() != cells
            || batch.mask.len() != cells
            || batch.segments.len() != cells
            || batch.position_ids.len() != cells
        {
            return Err(Error::Shape(
                "batch arrays do not match size × max_len".into(),
            ));
        }
        if let Some(&bad) = batch
            .token_ids
            .iter()
            .find(|&&t| t >= self.config.vocab_size)
        {
            return Err(Error::Shape(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn run(
        &self,
        batch: &Batch,
        mut dropout: Option<&mut RngStream>,
    ) -> Result<(EncodedBatch, Vec<RowCache>)> {
        self.check_batch(batch)?;
        let (l, d) = (batch.max_len, self.config.dim);
        let mut data = vec![0.0; batch.size * l * d];
        let mut caches = Vec::with_capacity(batch.size);
        for b in 0..batch.size {
            let span = b * l..(b + 1) * l;
            let slots: Vec<usize> = (0..l).filter(|&t| batch.mask[b * l + t]).collect();
            let pos: Vec<usize> = slots
                .iter()
                .map(|&t| batch.position_ids[span.start + t])
                .collect();
            let ids: Vec<usize> = slots
                .iter()
                .map(|&t| batch.token_ids[span.start + t])
                .collect();
            let segs: Vec<u8> = slots
                .iter()
                .map(|&t| batch.segments[span.start + t])
                .collect();
            let (y, cache) =
                self.encode_row(slots.clone(), &pos, &ids, &segs, dropout.as_deref_mut());
            for (r, &t) in slots.iter().enumerate() {
                data[(b * l + t) * d..][..d].copy_from_slice(&y[r * d..(r + 1) * d]);
            }
            caches.push(cache);
        }
        let enc = EncodedBatch {
            size: batch.size,
            max_len: l,
            dim: d,
            data,
            mask: batch.mask.clone(),
            sources: Vec::new(),
        };
        Ok((enc, caches))
    }

    /// Encodes a batch and records the pass on `tape`.
    pub fn encode(&self, batch: &Batch, tape: &mut Tape) -> Result<EncodedBatch> {
        let (mut enc, rows) = self.run(batch, tape.dropout.as_mut())?;
        let pass = tape.passes.len();
        enc.sources = (0..batch.size)
            .map(|row| {
                vec![RowSource {
                    pass: Some(pass),
                    row,
                    weight: 1.0,
                }]
            })
            .collect();
        tape.passes.push(Pass {
            size: batch.size,
            max_len: batch.max_len,
            rows,
            grad: vec![0.0; enc.data.len()],
        });
        Ok(enc)
    }

    /// Encodes without recording anything; gradients cannot reach this pass.
    pub fn encode_frozen(&self, batch: &Batch) -> Result<EncodedBatch> {
        let (mut enc, _) = self.run(batch, None)?;
        enc.sources = (0..batch.size)
            .map(|row| {
                vec![RowSource {
                    pass: None,
                    row,
                    weight: 1.0,
                }]
            })
            .collect();
        Ok(enc)
    }
}
