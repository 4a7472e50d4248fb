//! Post-LN transformer encoder over one sequence's active positions.

use super::linalg::{add_assign, bias_grad, input_grad, linear, softmax, weight_grad};
use super::params::{LayerLayout, Model};
use crate::sampling::RngStream;
use rand::Rng;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

struct LayerNormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(h: &[f64], n: usize, d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LayerNormCache) {
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut rstd = vec![0.0; n];
    for r in 0..n {
        let row = &h[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let xh = (row[j] - mean) * rs;
            xhat[r * d + j] = xh;
            y[r * d + j] = xh * g[j] + b[j];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &[f64],
    n: usize,
    d: usize,
    g: &[f64],
    cache: &LayerNormCache,
    dg: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dh = vec![0.0; n * d];
    for r in 0..n {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dx = 0.0;
        let mut mean_dx_xh = 0.0;
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            let dxh = dyr[j] * g[j];
            mean_dx += dxh;
            mean_dx_xh += dxh * xh[j];
        }
        mean_dx /= d as f64;
        mean_dx_xh /= d as f64;
        for j in 0..d {
            let dxh = dyr[j] * g[j];
            dh[r * d + j] = cache.rstd[r] * (dxh - mean_dx - xh[j] * mean_dx_xh);
        }
    }
    dh
}

struct LayerCache {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    ctx: Vec<f64>,
    drop1: Option<Vec<f64>>,
    ln1: LayerNormCache,
    y1: Vec<f64>,
    f: Vec<f64>,
    gact: Vec<f64>,
    drop2: Option<Vec<f64>>,
    ln2: LayerNormCache,
}

/// Forward caches for one sequence.
pub(crate) struct RowCache {
    /// Slot indices the rows of the output belong to.
    pub slots: Vec<usize>,
    positions: Vec<usize>,
    token_ids: Vec<usize>,
    segments: Vec<u8>,
    layers: Vec<LayerCache>,
}

fn dropout_mask(len: usize, p: f64, rng: &mut RngStream) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

impl Model {
    fn layer_forward(
        &self,
        l: &LayerLayout,
        x: Vec<f64>,
        n: usize,
        dropout: Option<&mut RngStream>,
    ) -> (Vec<f64>, LayerCache) {
        let d = self.config.dim;
        let ff = self.config.ff_dim;
        let p = &self.params;
        let q = linear(&x, n, &p[l.wq.clone()], &p[l.bq.clone()], d, d);
        let k = linear(&x, n, &p[l.wk.clone()], &p[l.bk.clone()], d, d);
        let v = linear(&x, n, &p[l.wv.clone()], &p[l.bv.clone()], d, d);
        let scale = 1.0 / (d as f64).sqrt();
        let mut attn = Vec::with_capacity(n * n);
        for i in 0..n {
            let qi = &q[i * d..(i + 1) * d];
            let s: Vec<f64> = (0..n)
                .map(|j| {
                    qi.iter()
                        .zip(&k[j * d..(j + 1) * d])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        * scale
                })
                .collect();
            attn.extend(softmax(&s));
        }
        let mut ctx = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..n {
                let a = attn[i * n + j];
                for (c, &vv) in ctx[i * d..(i + 1) * d]
                    .iter_mut()
                    .zip(&v[j * d..(j + 1) * d])
                {
                    *c += a * vv;
                }
            }
        }
        let mut o = linear(&ctx, n, &p[l.wo.clone()], &p[l.bo.clone()], d, d);
        let rate = self.config.dropout;
        let (mut drop1, mut drop2) = (None, None);
        let mut rng = dropout.filter(|_| rate > 0.0);
        if let Some(r) = rng.as_deref_mut() {
            let m = dropout_mask(n * d, rate, r);
            o.iter_mut().zip(&m).for_each(|(a, b)| *a *= b);
            drop1 = Some(m);
        }
        let mut h1 = x.clone();
        add_assign(&mut h1, &o);
        let (y1, ln1) = layer_norm(&h1, n, d, &p[l.ln1_g.clone()], &p[l.ln1_b.clone()]);
        let f = linear(&y1, n, &p[l.w1.clone()], &p[l.b1.clone()], d, ff);
        let gact: Vec<f64> = f.iter().map(|&z| gelu(z)).collect();
        let mut f2 = linear(&gact, n, &p[l.w2.clone()], &p[l.b2.clone()], ff, d);
        if let Some(r) = rng {
            let m = dropout_mask(n * d, rate, r);
            f2.iter_mut().zip(&m).for_each(|(a, b)| *a *= b);
            drop2 = Some(m);
        }
        let mut h2 = y1.clone();
        add_assign(&mut h2, &f2);
        let (y2, ln2) = layer_norm(&h2, n, d, &p[l.ln2_g.clone()], &p[l.ln2_b.clone()]);
        let cache = LayerCache {
            x,
            q,
            k,
            v,
            attn,
            ctx,
            drop1,
            ln1,
            y1,
            f,
            gact,
            drop2,
            ln2,
        };
        (y2, cache)
    }

    fn layer_backward(
        &self,
        l: &LayerLayout,
        c: &LayerCache,
        dy2: &[f64],
        n: usize,
        grads: &mut [f64],
    ) -> Vec<f64> {
        let d = self.config.dim;
        let ff = self.config.ff_dim;
        let p = &self.params;
        let (dg, rest) = split_pair(grads, &l.ln2_g, &l.ln2_b);
        let dh2 = layer_norm_backward(dy2, n, d, &p[l.ln2_g.clone()], &c.ln2, dg, rest);
        let mut df2 = dh2.clone();
        if let Some(m) = &c.drop2 {
            df2.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        weight_grad(&c.gact, &df2, n, ff, d, &mut grads[l.w2.clone()]);
        bias_grad(&df2, n, d, &mut grads[l.b2.clone()]);
        let mut dgact = input_grad(&df2, &p[l.w2.clone()], n, ff, d);
        for (g, &z) in dgact.iter_mut().zip(&c.f) {
            *g *= gelu_grad(z);
        }
        weight_grad(&c.y1, &dgact, n, d, ff, &mut grads[l.w1.clone()]);
        bias_grad(&dgact, n, ff, &mut grads[l.b1.clone()]);
        let mut dy1 = dh2;
        add_assign(&mut dy1, &input_grad(&dgact, &p[l.w1.clone()], n, d, ff));
        let (dg, db) = split_pair(grads, &l.ln1_g, &l.ln1_b);
        let dh1 = layer_norm_backward(&dy1, n, d, &p[l.ln1_g.clone()], &c.ln1, dg, db);
        let mut dout = dh1.clone();
        if let Some(m) = &c.drop1 {
            dout.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        weight_grad(&c.ctx, &dout, n, d, d, &mut grads[l.wo.clone()]);
        bias_grad(&dout, n, d, &mut grads[l.bo.clone()]);
        let dctx = input_grad(&dout, &p[l.wo.clone()], n, d, d);
        let scale = 1.0 / (d as f64).sqrt();
        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        for i in 0..n {
            let dci = &dctx[i * d..(i + 1) * d];
            let arow = &c.attn[i * n..(i + 1) * n];
            let da: Vec<f64> = (0..n)
                .map(|j| {
                    dci.iter()
                        .zip(&c.v[j * d..(j + 1) * d])
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            let dot: f64 = da.iter().zip(arow).map(|(a, b)| a * b).sum();
            for j in 0..n {
                let a = arow[j];
                for t in 0..d {
                    dv[j * d + t] += a * dci[t];
                }
                let ds = a * (da[j] - dot) * scale;
                if ds != 0.0 {
                    for t in 0..d {
                        dq[i * d + t] += ds * c.k[j * d + t];
                        dk[j * d + t] += ds * c.q[i * d + t];
                    }
                }
            }
        }
        let mut dx = dh1;
        for (w, b, dz) in [
            (&l.wq, &l.bq, &dq),
            (&l.wk, &l.bk, &dk),
            (&l.wv, &l.bv, &dv),
        ] {
            weight_grad(&c.x, dz, n, d, d, &mut grads[w.clone()]);
            bias_grad(dz, n, d, &mut grads[b.clone()]);
            add_assign(&mut dx, &input_grad(dz, &p[w.clone()], n, d, d));
        }
        dx
    }

    /// Encodes one sequence given the position ids of its active slots; the
    /// result is `positions.len() × d`.
    pub(crate) fn encode_row(
        &self,
        slots: Vec<usize>,
        positions: &[usize],
        token_ids: &[usize],
        segments: &[u8],
        mut dropout: Option<&mut RngStream>,
    ) -> (Vec<f64>, RowCache) {
        let d = self.config.dim;
        let n = positions.len();
        let p = &self.params;
        let mut x = vec![0.0; n * d];
        for (r, ((&pos, &tok), &seg)) in positions.iter().zip(token_ids).zip(segments).enumerate() {
            let xr = &mut x[r * d..(r + 1) * d];
            add_assign(xr, &p[self.layout.tok.start + tok * d..][..d]);
            add_assign(xr, &p[self.layout.pos.start + pos * d..][..d]);
            add_assign(xr, &p[self.layout.seg.start + seg as usize * d..][..d]);
        }
        let mut layers = Vec::with_capacity(self.layout.layers.len());
        for l in &self.layout.layers {
            let (y, cache) = self.layer_forward(l, x, n, dropout.as_deref_mut());
            layers.push(cache);
            x = y;
        }
        let cache = RowCache {
            slots,
            positions: positions.to_vec(),
            token_ids: token_ids.to_vec(),
            segments: segments.to_vec(),
            layers,
        };
        (x, cache)
    }

    /// Accumulates parameter gradients for one sequence given `dy` over its
    /// active positions.
    pub(crate) fn backward_row(&self, cache: &RowCache, dy: &[f64], grads: &mut [f64]) {
        let d = self.config.dim;
        let n = cache.positions.len();
        let mut dx = dy.to_vec();
        for (l, c) in self.layout.layers.iter().zip(&cache.layers).rev() {
            dx = self.layer_backward(l, c, &dx, n, grads);
        }
        for r in 0..n {
            let g = &dx[r * d..(r + 1) * d];
            let tok = self.layout.tok.start + cache.token_ids[r] * d;
            let pos = self.layout.pos.start + cache.positions[r] * d;
            let seg = self.layout.seg.start + cache.segments[r] as usize * d;
            for off in [tok, pos, seg] {
                add_assign(&mut grads[off..off + d], g);
            }
        }
    }
}

/// Two disjoint mutable sub-slices of the gradient vector.
fn split_pair<'a>(
    grads: &'a mut [f64],
    a: &std::ops::Range<usize>,
    b: &std::ops::Range<usize>,
) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = grads.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}
