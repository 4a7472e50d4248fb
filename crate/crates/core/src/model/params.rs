use std::ops::Range;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::RngStream;

/// Which positions the output head reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// Every position through a shared affine map.
    Tagging,
    /// Position 0 (CLS) only.
    SpanCls,
}

/// Encoder and head dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub dim: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub num_classes: usize,
    pub head: HeadKind,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, max_len: usize, num_classes: usize, head: HeadKind) -> Self {
        Self {
            vocab_size,
            max_len,
            dim: 64,
            layers: 2,
            ff_dim: 128,
            num_classes,
            head,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab-size", self.vocab_size),
            ("max-len", self.max_len),
            ("dim", self.dim),
            ("ff-dim", self.ff_dim),
            ("num-classes", self.num_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
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
}

#[derive(Clone, Debug)]
pub(crate) struct LayerLayout {
    pub wq: Range<usize>,
    pub bq: Range<usize>,
    pub wk: Range<usize>,
    pub bk: Range<usize>,
    pub wv: Range<usize>,
    pub bv: Range<usize>,
    pub wo: Range<usize>,
    pub bo: Range<usize>,
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
}

/// Offsets of every named tensor inside the flat parameter vector.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub tok: Range<usize>,
    pub pos: Range<usize>,
    pub seg: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub tensors: Vec<(String, Vec<usize>, Range<usize>)>,
    pub total: usize,
}

struct Builder {
    next: usize,
    tensors: Vec<(String, Vec<usize>, Range<usize>)>,
}

impl Builder {
    fn take(&mut self, name: String, shape: &[usize]) -> Range<usize> {
        let n: usize = shape.iter().product();
        let r = self.next..self.next + n;
        self.next += n;
        self.tensors.push((name, shape.to_vec(), r.clone()));
        r
    }
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let (d, f) = (c.dim, c.ff_dim);
        let mut b = Builder {
            next: 0,
            tensors: Vec::new(),
        };
        let tok = b.take("embed.token".into(), &[c.vocab_size, d]);
        let pos = b.take("embed.position".into(), &[c.max_len, d]);
        let seg = b.take("embed.segment".into(), &[2, d]);
        let layers = (0..c.layers)
            .map(|l| {
                let mut t = |n: &str, s: &[usize]| b.take(format!("layer{l}.{n}"), s);
                LayerLayout {
                    wq: t("attn.wq", &[d, d]),
                    bq: t("attn.bq", &[d]),
                    wk: t("attn.wk", &[d, d]),
                    bk: t("attn.bk", &[d]),
                    wv: t("attn.wv", &[d, d]),
                    bv: t("attn.bv", &[d]),
                    wo: t("attn.wo", &[d, d]),
                    bo: t("attn.bo", &[d]),
                    ln1_g: t("ln1.gain", &[d]),
                    ln1_b: t("ln1.bias", &[d]),
                    w1: t("ff.w1", &[d, f]),
                    b1: t("ff.b1", &[f]),
                    w2: t("ff.w2", &[f, d]),
                    b2: t("ff.b2", &[d]),
                    ln2_g: t("ln2.gain", &[d]),
                    ln2_b: t("ln2.bias", &[d]),
                }
            })
            .collect();
        let head_w = b.take("head.weight".into(), &[d, c.num_classes]);
        let head_b = b.take("head.bias".into(), &[c.num_classes]);
        Self {
            tok,
            pos,
            seg,
            layers,
            head_w,
            head_b,
            total: b.next,
            tensors: b.tensors,
        }
    }
}

/// Encoder plus output head with all parameters in one flat `f64` vector.
#[derive(Clone, Debug)]
pub struct Model {
    pub(crate) config: ModelConfig,
    pub(crate) layout: Layout,
    pub(crate) params: Vec<f64>,
    /// Source of dropout masks for training tapes, and how many tapes have
    /// drawn from it.
    pub(crate) dropout: Option<(RngStream, std::cell::Cell<u64>)>,
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut fill = |r: &Range<usize>, std: f64, rng: &mut RngStream| {
            let dist = Normal::new(0.0, std).expect("positive std");
            for p in &mut params[r.clone()] {
                *p = dist.sample(rng);
            }
        };
        let (d, f) = (config.dim as f64, config.ff_dim as f64);
        fill(&layout.tok, 0.5, rng);
        fill(&layout.pos, 0.5, rng);
        fill(&layout.seg, 0.5, rng);
        for l in &layout.layers {
            for w in [&l.wq, &l.wk, &l.wv, &l.wo, &l.w1] {
                fill(w, 1.0 / d.sqrt(), rng);
            }
            fill(&l.w2, 1.0 / f.sqrt(), rng);
        }
        fill(&layout.head_w, 1.0 / d.sqrt(), rng);
        for l in &layout.layers {
            for g in [&l.ln1_g, &l.ln2_g] {
                params[g.clone()].fill(1.0);
            }
        }
        Ok(Self {
            config,
            layout,
            params,
            dropout: None,
        })
    }

    /// Rebuilds a model from named tensors (checkpoint loading).
    pub fn from_tensors(
        config: ModelConfig,
        tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
    ) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if tensors.len() != layout.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                layout.tensors.len(),
                tensors.len()
            )));
        }
        let mut params = vec![0.0; layout.total];
        for ((name, shape, data), (want_name, want_shape, range)) in
            tensors.iter().zip(&layout.tensors)
        {
            if name != want_name || shape != want_shape || data.len() != range.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` {shape:?} does not match `{want_name}` {want_shape:?}"
                )));
            }
            params[range.clone()].copy_from_slice(data);
        }
        Ok(Self {
            config,
            layout,
            params,
            dropout: None,
        })
    }

    /// Training tapes made by [`Model::tape`] apply dropout drawn from
    /// children of `rng` (only when the configured rate is positive).
    pub fn enable_dropout(&mut self, rng: RngStream) {
        self.dropout = Some((rng, std::cell::Cell::new(0)));
    }

    pub fn disable_dropout(&mut self) {
        self.dropout = None;
    }

    /// A fresh tape for one training step.
    pub fn tape(&self) -> super::Tape {
        match &self.dropout {
            Some((rng, n)) if self.config.dropout > 0.0 => {
                let id = n.get();
                n.set(id + 1);
                super::Tape::with_dropout(rng.child("dropout", id))
            }
            _ => super::Tape::new(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(name, shape, values)` for every tensor, in layout order.
    pub fn tensors(&self) -> impl Iterator<Item = (&str, &[usize], &[f64])> {
        self.layout
            .tensors
            .iter()
            .map(|(n, s, r)| (n.as_str(), s.as_slice(), &self.params[r.clone()]))
    }

    /// Parameter index range of a named tensor.
    pub fn tensor_range(&self, name: &str) -> Option<Range<usize>> {
        self.layout
            .tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, _, r)| r.clone())
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}
