//! Sparse subspace learning by accelerated block coordinate descent.
//!
//! Minimizes over `W ≥ 0` (d × K) and `H` (K × d)
//!
//! ```text
//! F(W, H) = ½‖X − XWH‖²_F + (μ/2)·Tr(WᵀXᵀLXW) + β·Σᵢ‖Wᵢ.‖₂
//! ```
//!
//! by alternating a prox-linear step in `W` (taken from an extrapolated
//! point) with an exact least-squares update of `H`. A step that fails to
//! decrease `F` is redone once without extrapolation, which keeps the
//! objective history monotone. Features are ranked by the row norms of the
//! column-normalized final `W`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};
use crate::graph::{GraphKind, LaplacianMatrix};
use crate::linalg::{at_b, pinv_solve};
use crate::prox::prox_ngl;

pub use crate::linalg::spectral_norm;

/// Relative increase of `F` on an accepted step above which the step is
/// counted in [`SolverState::nonmonotone_steps`]. Such steps are still
/// accepted: they come from round-off in `H = (XW)†X` when `XW` is badly
/// conditioned, not from the step itself.
pub const RESTART_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Subspace dimension.
    #[serde(rename = "K")]
    pub k: usize,
    pub kappa: usize,
    pub mu: f64,
    pub beta: f64,
    pub delta_omega: f64,
    pub max_iter: usize,
    /// Relative objective change below which the run stops early; `0` disables.
    pub tol: f64,
    pub seed: u64,
    pub graph_kind: GraphKind,
    pub m: usize,
    /// Turn off to run plain (non-extrapolated) prox-linear steps.
    pub extrapolate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 100,
            kappa: 50,
            mu: 1.0,
            beta: 1.0,
            delta_omega: 0.99,
            max_iter: 30,
            tol: 0.0,
            seed: 0,
            graph_kind: GraphKind::Lpp,
            m: 5,
            extrapolate: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k == 0 {
            return bad("subspace dimension K must be at least 1".into());
        }
        if self.kappa == 0 || self.kappa > d {
            return bad(format!("kappa = {} must lie in [1, d = {d}]", self.kappa));
        }
        if !(self.delta_omega > 0.0 && self.delta_omega < 1.0) {
            return bad(format!("delta_omega = {} must lie in (0, 1)", self.delta_omega));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu = {} must be finite and >= 0", self.mu));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {} must be finite and >= 0", self.beta));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad(format!("tol = {} must be finite and >= 0", self.tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub w: DMatrix<f64>,
    pub w_prev: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub t_k: f64,
    pub l_w: f64,
    pub l_w_prev: f64,
    /// `F(W⁰, H⁰)` followed by one value per accepted iteration.
    pub objective_history: Vec<f64>,
    pub iter: usize,
    pub restarts: usize,
    /// Accepted steps whose objective rose by more than [`RESTART_SLACK`]
    /// (relative).
    pub nonmonotone_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub scores: Vec<f64>,
    pub selected: Vec<usize>,
    /// All feature indices by descending score.
    pub ordering: Vec<usize>,
}

/// Snapshot handed to the observer after every accepted iteration.
#[derive(Debug)]
pub struct StepRecord<'a> {
    /// 1-based index of the accepted iteration.
    pub iteration: usize,
    /// Extrapolation weight of the accepted step (0 after a restart).
    pub omega: f64,
    pub restarted: bool,
    pub l_w: f64,
    pub w_from: &'a DMatrix<f64>,
    pub h_from: &'a DMatrix<f64>,
    pub w_new: &'a DMatrix<f64>,
    pub h_new: &'a DMatrix<f64>,
    pub f_before: f64,
    pub f_after: f64,
}

#[derive(Debug, Clone)]
pub struct GlossResult {
    pub state: SolverState,
    pub ranking: FeatureRanking,
    pub spec_xtx: f64,
    pub spec_xtlx: f64,
    pub wall_seconds: f64,
}

fn check_dims(x: &DMatrix<f64>, l: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<()> {
    let (n, d) = x.shape();
    let k = w.ncols();
    if l.shape() != (n, n) || w.nrows() != d || h.shape() != (k, d) {
        return Err(Error::Dimension(format!(
            "X {n}x{d}, L {:?}, W {:?}, H {:?}",
            l.shape(),
            w.shape(),
            h.shape()
        )));
    }
    Ok(())
}

fn check_nonnegative(w: &DMatrix<f64>) -> Result<()> {
    for j in 0..w.ncols() {
        for i in 0..w.nrows() {
            let v = w[(i, j)];
            if v < 0.0 {
                return Err(Error::Infeasible { row: i, column: j, value: v });
            }
        }
    }
    Ok(())
}

fn row_norm_sum(w: &DMatrix<f64>) -> f64 {
    w.row_iter().map(|r| r.norm()).sum()
}

/// `F(W, H)` given `XW`; `L·XW` is computed here.
fn objective_from_xw(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    xw: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    mu: f64,
    beta: f64,
) -> f64 {
    let fit = 0.5 * (x - xw * h).norm_squared();
    let local = if mu == 0.0 { 0.0 } else { 0.5 * mu * xw.dot(&(l * xw)) };
    fit + local + beta * row_norm_sum(w)
}

/// `½‖X − XWH‖²_F + (μ/2)Tr(WᵀXᵀLXW) + β‖W‖₂,₁`. Fails if `W` has a negative entry.
pub fn objective(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    mu: f64,
    beta: f64,
) -> Result<f64> {
    check_dims(x, l, w, h)?;
    check_nonnegative(w)?;
    Ok(objective_from_xw(x, l, &(x * w), w, h, mu, beta))
}

/// `∇_W f = Xᵀ(XWH − X)Hᵀ + μXᵀLXW`, evaluated as `Xᵀ[(XW)(HHᵀ) − XHᵀ + μL(XW)]`.
pub fn grad_w(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    mu: f64,
) -> DMatrix<f64> {
    grad_from_xw(x, l, &(x * w), h, mu)
}

fn grad_from_xw(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    xw: &DMatrix<f64>,
    h: &DMatrix<f64>,
    mu: f64,
) -> DMatrix<f64> {
    let hht = h * h.transpose();
    let xht = x * h.transpose();
    let mut inner = xw * hht - xht;
    if mu != 0.0 {
        inner += (l * xw) * mu;
    }
    at_b(x, &inner)
}

/// `‖HHᵀ‖₂·‖XᵀX‖₂ + μ‖XᵀLX‖₂`, a Lipschitz constant of `∇_W f(·, H)`.
pub fn lipschitz_w(spec_xtx: f64, spec_xtlx: f64, h: &DMatrix<f64>, mu: f64) -> Result<f64> {
    let hht = h * h.transpose();
    Ok(spectral_norm(&hht)? * spec_xtx + mu * spec_xtlx)
}

/// Momentum recurrence: returns `(ω, t_next)` with
/// `t_next = ½(1 + √(1 + 4t²))` and
/// `ω = min((t − 1)/t_next, δ·√(L_prev/L))`.
pub fn extrapolation_weight(t_prev: f64, l_w_prev: f64, l_w: f64, delta_omega: f64) -> (f64, f64) {
    let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt());
    let omega_hat = (t_prev - 1.0) / t_next;
    let cap = delta_omega * (l_w_prev / l_w).sqrt();
    (omega_hat.min(cap).max(0.0), t_next)
}

/// Exact minimizer of `f(W, ·)`: `H = (XW)† X`, with singular values of `XW`
/// at or below `max(n, K)·ε·σ_max` dropped.
pub fn update_h(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    update_h_from_xw(x, &(x * w))
}

fn update_h_from_xw(x: &DMatrix<f64>, xw: &DMatrix<f64>) -> DMatrix<f64> {
    let cutoff = xw.nrows().max(xw.ncols()) as f64 * f64::EPSILON;
    pinv_solve(xw, x, cutoff)
}

/// `‖(XW)ᵀ(XWH − X)‖_F`, zero exactly when `H` minimizes `f(W, ·)`.
pub fn h_normal_residual(x: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let xw = x * w;
    at_b(&xw, &(&xw * h - x)).norm()
}

/// `‖W − prox(W − ∇_W f/L, β/L)‖_F`: zero at a critical point in `W`.
pub fn fixed_point_residual(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    mu: f64,
    beta: f64,
    l_w: f64,
) -> f64 {
    let g = grad_w(x, l, w, h, mu);
    let next = prox_ngl(&(w - g / l_w), beta / l_w);
    (w - next).norm()
}

/// Normalizes each nonzero column of `w`, scores rows by their ℓ2 norm and
/// takes the top `kappa` (ties to the smaller index).
pub fn rank_features(w: &DMatrix<f64>, kappa: usize) -> FeatureRanking {
    let mut wn = w.clone();
    for mut c in wn.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    let scores: Vec<f64> = wn.row_iter().map(|r| r.norm()).collect();
    let mut ordering: Vec<usize> = (0..scores.len()).collect();
    ordering.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let selected = ordering[..kappa.min(ordering.len())].to_vec();
    FeatureRanking { scores, selected, ordering }
}

/// Precomputed spectral norms `(‖XᵀX‖₂, ‖XᵀLX‖₂)`.
pub fn problem_norms(x: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<(f64, f64)> {
    let (n, d) = x.shape();
    // ‖XᵀX‖₂ = ‖XXᵀ‖₂; iterate on the smaller Gram matrix.
    let gram = if n < d { x * x.transpose() } else { at_b(x, x) };
    let xtx = spectral_norm(&gram)?;
    let xtlx = spectral_norm(&at_b(x, &(l * x)))?;
    Ok((xtx, xtlx))
}

/// Runs the solver with default observation (none).
pub fn gloss_run(x: &DataMatrix, l: &LaplacianMatrix, config: &SolverConfig) -> Result<GlossResult> {
    gloss_run_observed(x, l, config, |_| {})
}

/// Runs the solver, calling `observer` after every accepted iteration.
pub fn gloss_run_observed(
    data: &DataMatrix,
    lap: &LaplacianMatrix,
    config: &SolverConfig,
    mut observer: impl FnMut(&StepRecord<'_>),
) -> Result<GlossResult> {
    let started = Instant::now();
    let x = data.values();
    let l = &lap.l;
    let (n, d) = x.shape();
    if l.shape() != (n, n) {
        return Err(Error::Dimension(format!("Laplacian is {:?}, data has {n} samples", l.shape())));
    }
    config.validate(d)?;
    let (mu, beta) = (config.mu, config.beta);
    let (spec_xtx, spec_xtlx) = problem_norms(x, l)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = DMatrix::from_fn(d, config.k, |_, _| rng.random::<f64>());
    let xw = x * &w;
    let mut h = update_h_from_xw(x, &xw);
    let mut f = objective_from_xw(x, l, &xw, &w, &h, mu, beta);
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }

    let mut state_w_prev = w.clone();
    let mut t = 1.0;
    let mut l_prev = f64::NAN;
    let mut l_w = f64::NAN;
    let mut history = vec![f];
    let mut restarts = 0;
    let mut nonmonotone_steps = 0;
    let mut iter = 0;

    while iter < config.max_iter {
        l_w = lipschitz_w(spec_xtx, spec_xtlx, &h, mu)?;
        if l_w <= 0.0 {
            // H = 0 and no local term: ∇_W f vanishes identically, so any
            // positive step length is valid.
            l_w = 1.0;
        }
        if l_prev.is_nan() {
            l_prev = l_w;
        }
        let (mut omega, t_next) = extrapolation_weight(t, l_prev, l_w, config.delta_omega);
        if !config.extrapolate {
            omega = 0.0;
        }

        let step = |w_hat: &DMatrix<f64>| {
            let xw_hat = x * w_hat;
            let g = grad_from_xw(x, l, &xw_hat, &h, mu);
            let w_new = prox_ngl(&(w_hat - g / l_w), beta / l_w);
            let xw_new = x * &w_new;
            let h_new = update_h_from_xw(x, &xw_new);
            let f_new = objective_from_xw(x, l, &xw_new, &w_new, &h_new, mu, beta);
            (w_new, h_new, f_new)
        };

        let mut restarted = false;
        let mut candidate = if omega > 0.0 {
            let w_hat = &w + (&w - &state_w_prev) * omega;
            step(&w_hat)
        } else {
            step(&w)
        };
        if omega > 0.0 && !(candidate.2 < f) {
            restarted = true;
            restarts += 1;
            omega = 0.0;
            candidate = step(&w);
        }
        let (w_new, h_new, f_new) = candidate;
        iter += 1;
        if !f_new.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: iter });
        }
        if f_new > f + RESTART_SLACK * f.abs().max(1.0) {
            nonmonotone_steps += 1;
        }

        observer(&StepRecord {
            iteration: iter,
            omega,
            restarted,
            l_w,
            w_from: &w,
            h_from: &h,
            w_new: &w_new,
            h_new: &h_new,
            f_before: f,
            f_after: f_new,
        });

        let f_old = f;
        state_w_prev = std::mem::replace(&mut w, w_new);
        h = h_new;
        f = f_new;
        t = t_next;
        l_prev = l_w;
        history.push(f);

        if config.tol > 0.0 && (f_old - f).abs() < config.tol * f_old.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let ranking = rank_features(&w, config.kappa);
    if l_w.is_nan() {
        l_w = lipschitz_w(spec_xtx, spec_xtlx, &h, mu)?;
    }
    let state = SolverState {
        w,
        w_prev: state_w_prev,
        h,
        t_k: t,
        l_w,
        l_w_prev: l_prev,
        objective_history: history,
        iter,
        restarts,
        nonmonotone_steps,
    };
    Ok(GlossResult {
        state,
        ranking,
        spec_xtx,
        spec_xtlx,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
