//! k-nearest-neighbour similarity graphs and their Laplacians.
//!
//! Two constructions are supported:
//!
//! * **LPP** — heat-kernel weights `exp(-‖pᵢ-pⱼ‖² / 2σ²)` on every pair where
//!   either point is among the other's `m` nearest neighbours, with
//!   Laplacian `L = D - S`.
//! * **LLE** — per-sample affine reconstruction weights over the `m` nearest
//!   neighbours, with `L = (I - S)ᵀ(I - S)`.
//!
//! In both cases `Tr(YᵀLY)` measures how badly an embedding `Y` breaks the
//! local neighbourhood structure of the samples.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_GRAM_REG: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Lpp,
    Lle,
}

impl std::fmt::Display for GraphKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphKind::Lpp => "lpp",
            GraphKind::Lle => "lle",
        })
    }
}

impl std::str::FromStr for GraphKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lpp" => Ok(GraphKind::Lpp),
            "lle" => Ok(GraphKind::Lle),
            other => Err(format!("unknown graph kind {other:?} (expected lpp or lle)")),
        }
    }
}

/// How the heat-kernel width is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPolicy {
    /// Median Euclidean length over the undirected kNN edge set.
    MedianEdge,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub s: DMatrix<f64>,
    pub m: usize,
    pub kind: GraphKind,
    /// Heat-kernel width; `None` for LLE graphs.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    pub l: DMatrix<f64>,
    pub kind: GraphKind,
}

fn rows_of(x: &DataMatrix) -> Vec<Vec<f64>> {
    let v = x.values();
    (0..x.n()).map(|i| v.row(i).iter().copied().collect()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn knn_from_rows(rows: &[Vec<f64>], m: usize) -> Result<Vec<Vec<usize>>> {
    let n = rows.len();
    if m == 0 || m >= n {
        return Err(Error::InvalidArgument(format!(
            "neighbour count m = {m} must satisfy 1 <= m < n = {n}"
        )));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&rows[i], &rows[j]), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(m);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// The `m` nearest rows of each row (Euclidean), nearest first. A row is never
/// its own neighbour; equal distances go to the smaller row index.
pub fn knn_sets(x: &DataMatrix, m: usize) -> Result<Vec<Vec<usize>>> {
    knn_from_rows(&rows_of(x), m)
}

/// Heat-kernel similarity on the symmetric kNN graph.
pub fn lpp_similarity(x: &DataMatrix, m: usize, sigma: SigmaPolicy) -> Result<SimilarityGraph> {
    let rows = rows_of(x);
    let knn = knn_from_rows(&rows, m)?;
    let n = rows.len();

    let mut edge = vec![vec![false; n]; n];
    for (i, nb) in knn.iter().enumerate() {
        for &j in nb {
            edge[i][j] = true;
            edge[j][i] = true;
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if edge[i][j] {
                edges.push((i, j, sq_dist(&rows[i], &rows[j])));
            }
        }
    }

    let sigma = match sigma {
        SigmaPolicy::Fixed(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("sigma must be positive, got {s}")));
            }
            s
        }
        SigmaPolicy::MedianEdge => {
            let mut lens: Vec<f64> = edges.iter().map(|e| e.2.sqrt()).collect();
            lens.sort_by(f64::total_cmp);
            let k = lens.len();
            let med = if k % 2 == 1 { lens[k / 2] } else { 0.5 * (lens[k / 2 - 1] + lens[k / 2]) };
            if med <= 0.0 {
                return Err(Error::DegenerateSigma(med));
            }
            med
        }
    };

    let mut s = DMatrix::zeros(n, n);
    let denom = 2.0 * sigma * sigma;
    for &(i, j, d2) in &edges {
        let w = (-d2 / denom).exp();
        s[(i, j)] = w;
        s[(j, i)] = w;
    }
    Ok(SimilarityGraph { s, m, kind: GraphKind::Lpp, sigma: Some(sigma) })
}

/// Locally-linear reconstruction weights.
///
/// For sample `i` with neighbours `N`, solves `(G + r·tr(G)·I) w = 1` where
/// `G` is the Gram matrix of `p_j - p_i` over `j ∈ N`, then rescales `w` to
/// sum to one. When `tr(G) = 0` (all neighbours coincide with the sample) the
/// ridge `r` is used as an absolute shift.
pub fn lle_weights(x: &DataMatrix, m: usize, gram_reg: f64) -> Result<SimilarityGraph> {
    if !(gram_reg >= 0.0 && gram_reg.is_finite()) {
        return Err(Error::InvalidArgument(format!("gram_reg must be >= 0, got {gram_reg}")));
    }
    let rows = rows_of(x);
    let knn = knn_from_rows(&rows, m)?;
    let n = rows.len();

    let weights: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let nb = &knn[i];
            let diffs: Vec<Vec<f64>> = nb
                .iter()
                .map(|&j| rows[j].iter().zip(&rows[i]).map(|(a, b)| a - b).collect())
                .collect();
            let mut g = DMatrix::from_fn(m, m, |a, b| {
                diffs[a].iter().zip(&diffs[b]).map(|(u, v)| u * v).sum::<f64>()
            });
            let tr = g.trace();
            let shift = if tr > 0.0 { gram_reg * tr } else { gram_reg.max(f64::MIN_POSITIVE) };
            for k in 0..m {
                g[(k, k)] += shift;
            }
            let ones = DVector::from_element(m, 1.0);
            let w = match g.clone().cholesky() {
                Some(ch) => ch.solve(&ones),
                None => g
                    .lu()
                    .solve(&ones)
                    .ok_or(Error::DegenerateWeights { row: i, sum: 0.0 })?,
            };
            let sum = w.sum();
            if !(sum.abs() >= 1e-12) {
                return Err(Error::DegenerateWeights { row: i, sum });
            }
            Ok(w.iter().map(|v| v / sum).collect())
        })
        .collect();

    let mut s = DMatrix::zeros(n, n);
    for (i, w) in weights.into_iter().enumerate() {
        for (&j, v) in knn[i].iter().zip(w?) {
            s[(i, j)] = v;
        }
    }
    Ok(SimilarityGraph { s, m, kind: GraphKind::Lle, sigma: None })
}

/// `D - S` for LPP graphs, `(I - S)ᵀ(I - S)` for LLE graphs.
pub fn laplacian(graph: &SimilarityGraph) -> LaplacianMatrix {
    let s = &graph.s;
    let n = s.nrows();
    let l = match graph.kind {
        GraphKind::Lpp => {
            let mut l = -s.clone();
            for i in 0..n {
                l[(i, i)] += s.row(i).sum();
            }
            l
        }
        GraphKind::Lle => {
            let a = DMatrix::identity(n, n) - s;
            let m = a.transpose() * &a;
            (&m + m.transpose()) * 0.5
        }
    };
    LaplacianMatrix { l, kind: graph.kind }
}

/// Convenience: similarity graph of the requested kind.
pub fn build_graph(
    x: &DataMatrix,
    kind: GraphKind,
    m: usize,
    sigma: SigmaPolicy,
    gram_reg: f64,
) -> Result<SimilarityGraph> {
    match kind {
        GraphKind::Lpp => lpp_similarity(x, m, sigma),
        GraphKind::Lle => lle_weights(x, m, gram_reg),
    }
}
