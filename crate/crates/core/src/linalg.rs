//! Dense helpers shared by the greedy selector and the subspace solver.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 5000;
const POWER_SEED: u64 = 0x5eed_0f_9a55;

/// `aᵀ b`, routed through the blocked gemm kernel.
pub fn at_b(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * b
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration on the Rayleigh quotient.
///
/// The start vector is drawn from a fixed seed, so the result is
/// deterministic. Converged once successive Rayleigh quotients differ by at
/// most `1e-8` relative.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "spectral_norm needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 || a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let av = a * &v;
        let next = v.dot(&av);
        let norm = av.norm();
        if norm == 0.0 {
            // The start vector landed in the null space; restart from a fresh
            // random direction.
            v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            v /= v.norm();
            continue;
        }
        v = av / norm;
        if (next - lambda).abs() <= POWER_TOL * next.abs() {
            return Ok(next.max(0.0));
        }
        lambda = next;
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITER })
}

/// Orthonormal basis for the column space of `a`. Singular values at or below
/// `rel_cutoff · σ_max` are treated as zero.
pub fn range_basis(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_cutoff * smax && s > 0.0)
        .map(|(i, _)| i)
        .collect();
    u.select_columns(keep.iter())
}

/// Minimum-norm least-squares solution `a† b`, with singular values of `a` at
/// or below `rel_cutoff · σ_max` dropped.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let (m, k) = a.shape();
    if k == 0 || m == 0 {
        return DMatrix::zeros(k, b.ncols());
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let mut ut_b = at_b(&u, b);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let scale = if s > rel_cutoff * smax && s > 0.0 { 1.0 / s } else { 0.0 };
        ut_b.row_mut(i).scale_mut(scale);
    }
    v_t.transpose() * ut_b
}
