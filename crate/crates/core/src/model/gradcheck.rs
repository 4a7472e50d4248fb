use rand::Rng;

use crate::sampling::RngStream;

pub const FD_STEP: f64 = 1e-4;

/// Result of comparing analytic gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: Vec<usize>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks `n_coords` coordinates of `analytic` against central differences
/// of `loss` at `params`.
///
/// Half the coordinates are drawn uniformly; the rest come from those with a
/// nonzero analytic gradient so that sparse gradients are still exercised.
pub fn finite_diff_check<F>(
    params: &mut [f64],
    analytic: &[f64],
    mut loss: F,
    n_coords: usize,
    rng: &mut RngStream,
) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    let nonzero: Vec<usize> = (0..analytic.len())
        .filter(|&i| analytic[i] != 0.0)
        .collect();
    let mut checked = Vec::with_capacity(n_coords);
    for c in 0..n_coords {
        let i = if c % 2 == 1 && !nonzero.is_empty() {
            nonzero[rng.random_range(0..nonzero.len())]
        } else {
            rng.random_range(0..params.len())
        };
        checked.push(i);
    }
    let mut worst = (0.0, 0);
    for &i in &checked {
        let orig = params[i];
        params[i] = orig + FD_STEP;
        let up = loss(params);
        params[i] = orig - FD_STEP;
        let down = loss(params);
        params[i] = orig;
        let fd = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(analytic[i], fd);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    GradCheck {
        max_rel_error: worst.0,
        worst_index: worst.1,
        checked,
    }
}
