//! Dense row-major kernels used by the encoder and heads.

/// `x·W + b` for `x: n×i`, `W: i×o`.
pub(crate) fn linear(x: &[f64], n: usize, w: &[f64], b: &[f64], i: usize, o: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(n * o);
    for r in 0..n {
        y.extend_from_slice(b);
        let yr = &mut y[r * o..(r + 1) * o];
        for (k, &xv) in x[r * i..(r + 1) * i].iter().enumerate() {
            if xv != 0.0 {
                for (yv, &wv) in yr.iter_mut().zip(&w[k * o..(k + 1) * o]) {
                    *yv += xv * wv;
                }
            }
        }
    }
    y
}

/// `dW += xᵀ·dy`.
pub(crate) fn weight_grad(x: &[f64], dy: &[f64], n: usize, i: usize, o: usize, dw: &mut [f64]) {
    for r in 0..n {
        let dyr = &dy[r * o..(r + 1) * o];
        for (k, &xv) in x[r * i..(r + 1) * i].iter().enumerate() {
            if xv != 0.0 {
                for (g, &d) in dw[k * o..(k + 1) * o].iter_mut().zip(dyr) {
                    *g += xv * d;
                }
            }
        }
    }
}

/// `db += Σ_rows dy`.
pub(crate) fn bias_grad(dy: &[f64], n: usize, o: usize, db: &mut [f64]) {
    for r in 0..n {
        for (g, &d) in db.iter_mut().zip(&dy[r * o..(r + 1) * o]) {
            *g += d;
        }
    }
}

/// `dx = dy·Wᵀ`.
pub(crate) fn input_grad(dy: &[f64], w: &[f64], n: usize, i: usize, o: usize) -> Vec<f64> {
    let mut dx = vec![0.0; n * i];
    for r in 0..n {
        let dyr = &dy[r * o..(r + 1) * o];
        for (k, dxv) in dx[r * i..(r + 1) * i].iter_mut().enumerate() {
            *dxv = w[k * o..(k + 1) * o]
                .iter()
                .zip(dyr)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    dx
}

/// Numerically stable softmax of one row.
pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
