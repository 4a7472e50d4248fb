//! Beta and categorical sampling.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// ln of a Gamma(shape, 1) draw, by Marsaglia-Tsang.
///
/// For shape < 1 the draw is boosted: G(shape) = G(shape + 1) · U^(1/shape).
/// Working in log space keeps tiny shapes from underflowing to zero.
fn ln_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        return ln_gamma_draw(shape + 1.0, rng) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let (x, v) = loop {
            let x: f64 = rng.sample(StandardNormal);
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u: f64 = rng.random();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return (d * v).ln();
        }
    }
}

/// Draws from the symmetric Beta(alpha, alpha) as g1 / (g1 + g2).
pub fn beta_sample<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!(
            "Beta parameter must be positive, got {alpha}"
        )));
    }
    let l1 = ln_gamma_draw(alpha, rng);
    let l2 = ln_gamma_draw(alpha, rng);
    // g1/(g1+g2) = 1/(1+exp(l2-l1))
    let lam = 1.0 / (1.0 + (l2 - l1).exp());
    Ok(lam.clamp(0.0, 1.0))
}

/// Draws index `i` with probability `w_i / Σw`.
pub fn categorical_sample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Data(format!("invalid categorical weight {w}")));
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::Data("categorical weights sum to zero".into()));
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return Ok(i);
            }
        }
    }
    Ok(last)
}
