//! Greedy locally-preserving feature selection.
//!
//! Features are picked one at a time. Each round scores every remaining
//! candidate by two terms, each normalized to sum to one over the candidate
//! set:
//!
//! * its absolute correlation with the current residual,
//!   `Σ_s |x_jᵀ r_s|`, and
//! * its locality score `x_jᵀ S x_j`.
//!
//! The best candidate joins the selected set and the residual is refreshed to
//! `X - P_I X`, where `P_I` projects onto the span of the selected columns.
//!
//! Note on normalization: the locality denominator is `Σ_{j∈Ω} x_jᵀ S x_j`,
//! i.e. the candidates' own scores.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::linalg::{at_b, range_basis};

/// `Σ_s |xᵀ r_s|` over the columns of `r`.
pub fn correlation(x: &[f64], r: &DMatrix<f64>) -> f64 {
    assert_eq!(x.len(), r.nrows(), "correlation: length mismatch");
    r.column_iter()
        .map(|c| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().abs())
        .sum()
}

/// Output of [`glpsl_select`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedySelection {
    /// Selected feature indices in pick order.
    pub selected: Vec<usize>,
    /// `‖R‖_F` after each round.
    pub residual_history: Vec<f64>,
}

/// Mutable state of one greedy run.
#[derive(Debug, Clone)]
pub struct GreedyState<'a> {
    x: &'a DMatrix<f64>,
    locality: Vec<f64>,
    residual: DMatrix<f64>,
    candidates: Vec<usize>,
    selected: Vec<usize>,
    scores: Vec<f64>,
    residual_history: Vec<f64>,
    rank_cutoff: f64,
}

impl<'a> GreedyState<'a> {
    pub fn new(x: &'a DataMatrix, graph: &SimilarityGraph) -> Result<Self> {
        let v = x.values();
        let (n, d) = v.shape();
        if graph.s.nrows() != n || graph.s.ncols() != n {
            return Err(Error::Dimension(format!(
                "similarity is {}x{}, data has {n} samples",
                graph.s.nrows(),
                graph.s.ncols()
            )));
        }
        // x_jᵀ S x_j for every column j.
        let sx = &graph.s * v;
        let locality = (0..d).map(|j| v.column(j).dot(&sx.column(j))).collect();
        Ok(Self {
            x: v,
            locality,
            residual: v.clone(),
            candidates: (0..d).collect(),
            selected: Vec::new(),
            scores: Vec::new(),
            residual_history: Vec::new(),
            rank_cutoff: n.max(d) as f64 * f64::EPSILON,
        })
    }

    pub fn residual(&self) -> &DMatrix<f64> {
        &self.residual
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Scores of the candidates (aligned with [`candidates`](Self::candidates))
    /// as computed in the most recent round.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Line-5 scores of every current candidate against the current residual.
    pub fn candidate_scores(&self) -> Vec<f64> {
        let xo = self.x.select_columns(self.candidates.iter());
        let c = at_b(&xo, &self.residual);
        let cor: Vec<f64> = c.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
        let loc: Vec<f64> = self.candidates.iter().map(|&j| self.locality[j]).collect();
        let cor_sum: f64 = cor.iter().sum();
        let loc_sum: f64 = loc.iter().sum();
        cor.iter()
            .zip(&loc)
            .map(|(&c, &l)| {
                let a = if cor_sum == 0.0 { 0.0 } else { c / cor_sum };
                let b = if loc_sum == 0.0 { 0.0 } else { l / loc_sum };
                a + b
            })
            .collect()
    }

    /// Runs one round and returns the picked feature index.
    pub fn step(&mut self) -> Result<usize> {
        if self.candidates.is_empty() {
            return Err(Error::InvalidArgument("no candidates left".into()));
        }
        let scores = self.candidate_scores();
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            // Candidates are kept in ascending index order, so strict `>`
            // resolves ties toward the smaller index.
            if s > scores[best] {
                best = k;
            }
        }
        let pick = self.candidates.remove(best);
        self.selected.push(pick);
        self.scores = scores;

        let xi = self.x.select_columns(self.selected.iter());
        let q = range_basis(&xi, self.rank_cutoff);
        self.residual = self.x - &q * at_b(&q, self.x);

        let norm = self.residual.norm();
        if let Some(&prev) = self.residual_history.last() {
            let slack = 1e-10 * self.x.norm().max(1.0);
            if norm > prev + slack {
                return Err(Error::Invariant(format!(
                    "residual grew from {prev:e} to {norm:e} after selecting feature {pick}"
                )));
            }
        }
        self.residual_history.push(norm);
        Ok(pick)
    }

    pub fn finish(self) -> GreedySelection {
        GreedySelection { selected: self.selected, residual_history: self.residual_history }
    }
}

/// Selects `kappa` features greedily. `x` should have unit-norm columns and
/// `graph` must be built on the same samples.
pub fn glpsl_select(x: &DataMatrix, graph: &SimilarityGraph, kappa: usize) -> Result<GreedySelection> {
    if kappa > x.d() {
        return Err(Error::InvalidArgument(format!("kappa = {kappa} exceeds d = {}", x.d())));
    }
    let mut state = GreedyState::new(x, graph)?;
    for _ in 0..kappa {
        state.step()?;
    }
    Ok(state.finish())
}

/// `xᵀ L x` for a single column, used to relate the locality score to the
/// Laplacian penalty.
pub fn quadratic_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}
