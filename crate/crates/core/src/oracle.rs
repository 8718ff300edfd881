//! Slow, independent reference implementations.
//!
//! Each oracle solves the same problem as a production routine by a
//! different algorithm: subgradient descent instead of the closed-form prox,
//! Gram–Schmidt instead of the SVD projector, permutation enumeration instead
//! of Kuhn–Munkres, explicit loops and finite differences instead of the
//! matrix-product objective and gradient. The `verify_*` functions run them
//! against the production path over seeded random cases and summarize the
//! disagreement in an [`OracleReport`].
//!
//! Nothing here is tuned for speed.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_features, DataMatrix};
use crate::error::{Error, Result};
use crate::eval::best_mapping;
use crate::graph::{laplacian, lpp_similarity, SigmaPolicy};
use crate::greedy::GreedyState;
use crate::linalg::spectral_norm;
use crate::prox::{prox_objective, prox_row};
use crate::solver::{grad_w, objective};

/// Largest matrix side [`assignment_oracle`] will enumerate.
pub const ASSIGNMENT_MAX: usize = 8;

/// Iteration budget of [`prox_oracle`] in [`verify_prox`].
pub const PROX_ORACLE_ITERS: usize = 100_000;

/// Outcome of one verification batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub check: String,
    pub case_count: usize,
    pub tolerance: f64,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// One human-readable descriptor per failing case.
    pub failures: Vec<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn collect(check: &str, tolerance: f64, cases: Vec<CaseOutcome>) -> Self {
        let mut report = Self {
            check: check.to_owned(),
            case_count: cases.len(),
            tolerance,
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            failures: Vec::new(),
        };
        for c in cases {
            report.max_abs_error = report.max_abs_error.max(c.abs);
            report.max_rel_error = report.max_rel_error.max(c.rel);
            if let Some(f) = c.failure {
                report.failures.push(f);
            }
        }
        report
    }
}

struct CaseOutcome {
    abs: f64,
    rel: f64,
    failure: Option<String>,
}

fn case_rng(seed: u64, case: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case as u64);
    rng
}

/// Minimizes `½‖x − y‖² + λ‖x‖₂` over `x ≥ 0` by projected subgradient
/// descent. Steps decay geometrically from 1 to 1e-9 over `iters`
/// iterations and the best iterate seen is returned.
pub fn prox_oracle(y: &[f64], lambda: f64, iters: usize) -> Vec<f64> {
    let value = |x: &[f64]| {
        let mut fit = 0.0;
        let mut sq = 0.0;
        for (a, b) in x.iter().zip(y) {
            fit += (a - b) * (a - b);
            sq += a * a;
        }
        0.5 * fit + lambda * sq.sqrt()
    };
    let mut x: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let mut best = x.clone();
    let mut best_val = value(&x);
    let ratio = if iters > 1 { (1e-9f64).powf(1.0 / (iters - 1) as f64) } else { 1.0 };
    let mut step = 1.0;
    for _ in 0..iters {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        // At x = 0 the zero vector is a valid subgradient of ‖·‖.
        let pull = if norm > 0.0 { lambda / norm } else { 0.0 };
        for (xi, &yi) in x.iter_mut().zip(y) {
            let g = *xi - yi + pull * *xi;
            *xi = (*xi - step * g).max(0.0);
        }
        let v = value(&x);
        if v < best_val {
            best_val = v;
            best.copy_from_slice(&x);
        }
        step *= ratio;
    }
    best
}

/// `min_H ‖X − X_I H‖_F` via modified Gram–Schmidt with one
/// reorthogonalization pass. Columns of `X_I` that are numerically dependent
/// on earlier ones are skipped.
pub fn lsq_residual_oracle(x: &DMatrix<f64>, columns: &[usize]) -> f64 {
    let n = x.nrows();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let orthogonalize = |v: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for _ in 0..2 {
            for q in basis {
                let c: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
    };
    for &j in columns {
        let mut v: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
        let original = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        orthogonalize(&mut v, &basis);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 * original.max(f64::MIN_POSITIVE) && norm > 0.0 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut total = 0.0;
    for j in 0..x.ncols() {
        let mut r: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
        orthogonalize(&mut r, &basis);
        total += r.iter().map(|a| a * a).sum::<f64>();
    }
    total.sqrt()
}

/// Best assignment by enumerating all `c!` permutations in lexicographic
/// order; returns `perm[row] = column` and its total weight. Ties keep the
/// lexicographically first permutation.
pub fn assignment_oracle(weights: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let c = weights.len();
    if c > ASSIGNMENT_MAX {
        return Err(Error::InvalidArgument(format!(
            "assignment oracle enumerates at most {ASSIGNMENT_MAX}×{ASSIGNMENT_MAX}, got {c}×{c}"
        )));
    }
    if weights.iter().any(|r| r.len() != c) {
        return Err(Error::Dimension("assignment oracle needs a square matrix".into()));
    }

    fn search(
        w: &[Vec<f64>],
        row: usize,
        used: &mut [bool],
        perm: &mut Vec<usize>,
        acc: f64,
        best: &mut (Vec<usize>, f64),
    ) {
        if row == w.len() {
            if acc > best.1 {
                *best = (perm.clone(), acc);
            }
            return;
        }
        for col in 0..w.len() {
            if !used[col] {
                used[col] = true;
                perm.push(col);
                search(w, row + 1, used, perm, acc + w[row][col], best);
                perm.pop();
                used[col] = false;
            }
        }
    }

    let mut best = (Vec::new(), f64::NEG_INFINITY);
    if c == 0 {
        return Ok((Vec::new(), 0.0));
    }
    search(weights, 0, &mut vec![false; c], &mut Vec::with_capacity(c), 0.0, &mut best);
    Ok(best)
}

/// The full objective term by term with explicit loops.
pub fn objective_oracle(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    mu: f64,
    beta: f64,
) -> f64 {
    let (n, d) = x.shape();
    let k = w.ncols();
    let mut xw = vec![vec![0.0; k]; n];
    for i in 0..n {
        for c in 0..k {
            for j in 0..d {
                xw[i][c] += x[(i, j)] * w[(j, c)];
            }
        }
    }
    let mut fit = 0.0;
    for i in 0..n {
        for j in 0..d {
            let mut approx = 0.0;
            for c in 0..k {
                approx += xw[i][c] * h[(c, j)];
            }
            fit += (x[(i, j)] - approx).powi(2);
        }
    }
    let mut trace = 0.0;
    for c in 0..k {
        for a in 0..n {
            for b in 0..n {
                trace += xw[a][c] * l[(a, b)] * xw[b][c];
            }
        }
    }
    let mut group = 0.0;
    for j in 0..d {
        group += (0..k).map(|c| w[(j, c)] * w[(j, c)]).sum::<f64>().sqrt();
    }
    0.5 * fit + 0.5 * mu * trace + beta * group
}

/// Central finite differences of the smooth part (β = 0) of the objective
/// with respect to `W`.
pub fn gradient_fd_oracle(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    mu: f64,
    step: f64,
) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(w.nrows(), w.ncols());
    let mut probe = w.clone();
    for j in 0..w.nrows() {
        for c in 0..w.ncols() {
            let base = w[(j, c)];
            probe[(j, c)] = base + step;
            let up = objective_oracle(x, l, &probe, h, mu, 0.0);
            probe[(j, c)] = base - step;
            let down = objective_oracle(x, l, &probe, h, mu, 0.0);
            probe[(j, c)] = base;
            g[(j, c)] = (up - down) / (2.0 * step);
        }
    }
    g
}

/// Largest absolute eigenvalue of a symmetric matrix from a full dense
/// eigendecomposition.
pub fn spectral_norm_oracle(sym: &DMatrix<f64>) -> f64 {
    sym.clone().symmetric_eigen().eigenvalues.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

/// Closed-form prox against [`prox_oracle`] on `cases` random
/// `(y ∈ [-5, 5]^dim, λ ∈ (0, 10])` pairs. A case fails if the closed form's
/// objective exceeds the oracle's by more than 1e-8 or the two solutions
/// differ by more than `tol` in any component.
pub fn verify_prox(cases: usize, dim: usize, iters: usize, tol: f64, seed: u64) -> OracleReport {
    let outcomes = (0..cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = case_rng(seed, case);
            let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let lambda = 10.0 * (1.0 - rng.random::<f64>());
            let closed = prox_row(&y, lambda);
            let reference = prox_oracle(&y, lambda, iters);
            let abs = closed.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let scale = reference.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let gap = prox_objective(&closed, &y, lambda) - prox_objective(&reference, &y, lambda);
            let failure = (abs > tol || gap > 1e-8).then(|| {
                format!("case {case}: λ = {lambda:.6}, max |Δx| = {abs:e}, objective gap = {gap:e}")
            });
            CaseOutcome { abs, rel: abs / scale, failure }
        })
        .collect();
    OracleReport::collect("prox", tol, outcomes)
}

/// Every greedy round's residual against [`lsq_residual_oracle`] on random
/// `n × d` matrices with `d ≤ 8`, plus monotonicity of the residual sequence.
pub fn verify_greedy(cases: usize, tol: f64, seed: u64) -> OracleReport {
    let outcomes = (0..cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = case_rng(seed, case);
            let d = rng.random_range(2..=8);
            let n = rng.random_range(d + 2..=d + 10);
            let mut run = || -> Result<CaseOutcome> {
                let raw = DataMatrix::new(uniform_matrix(&mut rng, n, d, -1.0, 1.0))?;
                let x = normalize_features(&raw).matrix;
                let g = lpp_similarity(&x, 3, SigmaPolicy::MedianEdge)?;
                let mut state = GreedyState::new(&x, &g)?;
                let mut abs = 0.0f64;
                let mut rel = 0.0f64;
                let mut failure = None;
                let mut prev = f64::INFINITY;
                for round in 0..d {
                    state.step()?;
                    let got = state.residual().norm();
                    let want = lsq_residual_oracle(x.values(), state.selected());
                    let err = (got - want).abs();
                    abs = abs.max(err);
                    rel = rel.max(err / want.max(1.0));
                    if failure.is_none() && (err > tol || got > prev + tol) {
                        failure = Some(format!(
                            "case {case} ({n}×{d}) round {round}: residual {got:e}, oracle {want:e}, previous {prev:e}"
                        ));
                    }
                    prev = got;
                }
                Ok(CaseOutcome { abs, rel, failure })
            };
            run().unwrap_or_else(|e| CaseOutcome {
                abs: f64::INFINITY,
                rel: f64::INFINITY,
                failure: Some(format!("case {case}: {e}")),
            })
        })
        .collect();
    OracleReport::collect("greedy_residual", tol, outcomes)
}

/// Monotonicity of the best least-squares residual under inclusion, checked
/// exhaustively over every subset and every one-column extension of random
/// `n × d` matrices.
pub fn verify_nested_subsets(cases: usize, d: usize, tol: f64, seed: u64) -> OracleReport {
    let outcomes = (0..cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = case_rng(seed, case);
            let x = uniform_matrix(&mut rng, d + 4, d, -1.0, 1.0);
            let residual: Vec<f64> = (0u32..1 << d)
                .map(|mask| {
                    let cols: Vec<usize> = (0..d).filter(|j| mask & (1 << j) != 0).collect();
                    lsq_residual_oracle(&x, &cols)
                })
                .collect();
            let mut worst = 0.0f64;
            let mut failure = None;
            for mask in 0..residual.len() {
                for j in 0..d {
                    if mask & (1 << j) == 0 {
                        let growth = residual[mask | (1 << j)] - residual[mask];
                        worst = worst.max(growth);
                        if growth > tol && failure.is_none() {
                            failure = Some(format!("case {case}: adding column {j} to subset {mask:#b} grew the residual by {growth:e}"));
                        }
                    }
                }
            }
            CaseOutcome { abs: worst, rel: worst / x.norm(), failure }
        })
        .collect();
    OracleReport::collect("nested_subsets", tol, outcomes)
}

/// [`best_mapping`] against [`assignment_oracle`] on label vectors realizing
/// random `c × c` confusion matrices (`c ≤ max_c`).
pub fn verify_assignment(cases: usize, max_c: usize, seed: u64) -> OracleReport {
    let outcomes = (0..cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = case_rng(seed, case);
            let c = rng.random_range(1..=max_c.clamp(1, ASSIGNMENT_MAX));
            let counts: Vec<Vec<usize>> =
                (0..c).map(|_| (0..c).map(|_| rng.random_range(1..20)).collect()).collect();
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for (p, row) in counts.iter().enumerate() {
                for (t, &m) in row.iter().enumerate() {
                    pred.extend(std::iter::repeat_n(p, m));
                    truth.extend(std::iter::repeat_n(t, m));
                }
            }
            let weights: Vec<Vec<f64>> =
                counts.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let (_, want) = assignment_oracle(&weights).expect("c is bounded above");
            let got = best_mapping(&pred, &truth).matched as f64;
            let abs = (got - want).abs();
            let failure = (abs > 0.0).then(|| format!("case {case} (c = {c}): matched {got}, oracle {want}"));
            CaseOutcome { abs, rel: abs / want.max(1.0), failure }
        })
        .collect();
    OracleReport::collect("assignment", 0.0, outcomes)
}

fn random_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    k: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let raw = DataMatrix::new(uniform_matrix(rng, n, d, -1.0, 1.0))?;
    let x = normalize_features(&raw).matrix;
    let lap = laplacian(&lpp_similarity(&x, 3, SigmaPolicy::MedianEdge)?);
    let w = uniform_matrix(rng, d, k, 0.0, 1.0);
    let h = uniform_matrix(rng, k, d, -1.0, 1.0);
    Ok((x.values().clone(), lap.l, w, h))
}

/// Matrix-form objective against [`objective_oracle`].
pub fn verify_objective(cases: usize, tol: f64, seed: u64) -> OracleReport {
    let outcomes = (0..cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = case_rng(seed, case);
            let mu = rng.random_range(0.0..2.0);
            let beta = rng.random_range(0.0..2.0);
            match random_problem(&mut rng, 9, 5, 3).and_then(|(x, l, w, h)| {
                Ok((objective(&x, &l, &w, &h, mu, beta)?, objective_oracle(&x, &l, &w, &h, mu, beta)))
            }) {
                Ok((got, want)) => {
                    let abs = (got - want).abs();
                    let rel = abs / want.abs().max(1e-300);
                    let failure = (rel > tol).then(|| format!("case {case}: {got:e} vs {want:e}"));
                    CaseOutcome { abs, rel, failure }
                }
                Err(e) => CaseOutcome {
                    abs: f64::INFINITY,
                    rel: f64::INFINITY,
                    failure: Some(format!("case {case}: {e}")),
                },
            }
        })
        .collect();
    OracleReport::collect("objective", tol, outcomes)
}

/// Analytic gradient against central differences with step 1e-6.
pub fn verify_gradient(cases: usize, tol: f64, seed: u64) -> OracleReport {
    let outcomes = (0..cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = case_rng(seed, case);
            let mu = rng.random_range(0.0..2.0);
            match random_problem(&mut rng, 8, 5, 3) {
                Ok((x, l, w, h)) => {
                    let got = grad_w(&x, &l, &w, &h, mu);
                    let want = gradient_fd_oracle(&x, &l, &w, &h, mu, 1e-6);
                    let abs = (&got - &want).amax();
                    let rel = (&got - &want).norm() / want.norm().max(1e-300);
                    let failure = (rel > tol).then(|| format!("case {case}: relative error {rel:e}"));
                    CaseOutcome { abs, rel, failure }
                }
                Err(e) => CaseOutcome {
                    abs: f64::INFINITY,
                    rel: f64::INFINITY,
                    failure: Some(format!("case {case}: {e}")),
                },
            }
        })
        .collect();
    OracleReport::collect("gradient", tol, outcomes)
}

/// Power-iteration spectral norm against [`spectral_norm_oracle`] on random
/// `dim × dim` Gram matrices.
pub fn verify_spectral(cases: usize, dim: usize, tol: f64, seed: u64) -> OracleReport {
    let outcomes = (0..cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = case_rng(seed, case);
            let a = uniform_matrix(&mut rng, dim + 5, dim, -1.0, 1.0);
            let gram = a.transpose() * &a;
            let want = spectral_norm_oracle(&gram);
            match spectral_norm(&gram) {
                Ok(got) => {
                    let abs = (got - want).abs();
                    let rel = abs / want.max(1e-300);
                    let failure = (rel > tol).then(|| format!("case {case}: {got:e} vs {want:e}"));
                    CaseOutcome { abs, rel, failure }
                }
                Err(e) => CaseOutcome {
                    abs: f64::INFINITY,
                    rel: f64::INFINITY,
                    failure: Some(format!("case {case}: {e}")),
                },
            }
        })
        .collect();
    OracleReport::collect("spectral_norm", tol, outcomes)
}

/// Every verification at its default size and tolerance.
pub fn verify_all(seed: u64) -> Vec<OracleReport> {
    vec![
        verify_prox(1000, 100, PROX_ORACLE_ITERS, 1e-6, seed),
        verify_greedy(200, 1e-10, seed),
        verify_nested_subsets(20, 8, 1e-10, seed),
        verify_assignment(200, 7, seed),
        verify_objective(100, 1e-10, seed),
        verify_gradient(50, 1e-5, seed),
        verify_spectral(20, 30, 1e-6, seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prox_oracle_matches_closed_form_example() {
        let x = prox_oracle(&[3.0, 4.0], 1.0, PROX_ORACLE_ITERS);
        let want = prox_objective(&[2.4, 3.2], &[3.0, 4.0], 1.0);
        assert!((prox_objective(&x, &[3.0, 4.0], 1.0) - want).abs() < 1e-8);
    }

    #[test]
    fn prox_oracle_nonpositive_input() {
        assert_eq!(prox_oracle(&[-1.0, 0.0, -3.0], 0.5, 1000), vec![0.0; 3]);
    }

    #[test]
    fn lsq_oracle_trivial_subsets() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(lsq_residual_oracle(&x, &[0, 1]) < 1e-14);
        assert!((lsq_residual_oracle(&x, &[]) - x.norm()).abs() < 1e-15);
    }

    #[test]
    fn lsq_oracle_skips_dependent_columns() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((lsq_residual_oracle(&x, &[0, 1]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn assignment_oracle_cases() {
        let id = vec![vec![5.0, 1.0, 0.0], vec![0.0, 4.0, 1.0], vec![1.0, 0.0, 3.0]];
        assert_eq!(assignment_oracle(&id).unwrap(), (vec![0, 1, 2], 12.0));
        assert_eq!(assignment_oracle(&[vec![7.5]]).unwrap(), (vec![0], 7.5));
        assert!(assignment_oracle(&vec![vec![0.0; 9]; 9]).is_err());
    }

    #[test]
    fn small_batches_pass() {
        for r in [
            verify_prox(20, 10, 20_000, 1e-6, 1),
            verify_greedy(10, 1e-10, 1),
            verify_nested_subsets(2, 5, 1e-10, 1),
            verify_assignment(20, 6, 1),
            verify_objective(10, 1e-10, 1),
            verify_gradient(5, 1e-5, 1),
            verify_spectral(3, 12, 1e-6, 1),
        ] {
            assert!(r.passed(), "{}: {:?}", r.check, r.failures);
            assert_eq!(r.case_count > 0, true);
        }
    }
}
