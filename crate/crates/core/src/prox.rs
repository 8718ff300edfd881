//! Proximal operator of `λ‖x‖₂` restricted to the nonnegative orthant.
//!
//! `argmin_{x ≥ 0} ½‖x − y‖² + λ‖x‖₂` has a closed form: drop the
//! nonpositive components of `y`, then apply block soft-thresholding to what
//! remains. Applied row by row it is the W-update of the subspace solver.

use nalgebra::DMatrix;

/// Closed-form prox of one row. Components with `y_i ≤ 0` map to zero.
pub fn prox_row(y: &[f64], lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    prox_row_into(y, lambda, &mut out);
    out
}

fn prox_row_into(y: &[f64], lambda: f64, out: &mut [f64]) {
    let norm = y.iter().filter(|&&v| v > 0.0).map(|v| v * v).sum::<f64>().sqrt();
    if norm <= lambda {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let scale = (norm - lambda) / norm;
    for (o, &v) in out.iter_mut().zip(y) {
        *o = if v > 0.0 { scale * v } else { 0.0 };
    }
}

/// Row-wise [`prox_row`] over a `d × K` matrix.
pub fn prox_ngl(y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (d, k) = y.shape();
    let mut out = DMatrix::zeros(d, k);
    let mut row = vec![0.0; k];
    let mut res = vec![0.0; k];
    for i in 0..d {
        for (c, r) in row.iter_mut().enumerate() {
            *r = y[(i, c)];
        }
        prox_row_into(&row, lambda, &mut res);
        for (c, &v) in res.iter().enumerate() {
            out[(i, c)] = v;
        }
    }
    out
}

/// `½‖x − y‖² + λ‖x‖₂`.
pub fn prox_objective(x: &[f64], y: &[f64], lambda: f64) -> f64 {
    let fit: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    0.5 * fit + lambda * norm
}
