//! Clustering-based evaluation of a feature subset.
//!
//! The samples are clustered with K-means on the selected columns only, the
//! clusters are matched to classes with the Kuhn-Munkres algorithm, and the
//! result is scored by accuracy (ACC) and normalized mutual information
//! (NMI). Repeated K-means runs are summarized by mean and population
//! standard deviation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataMatrix, LabelVector};
use crate::error::{Error, Result};

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_SHIFT_TOL: f64 = 1e-6;
pub const DEFAULT_RUNS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KMeansInit {
    #[default]
    PlusPlus,
    Uniform,
}

impl std::str::FromStr for KMeansInit {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "plusplus" | "kmeans++" | "++" => Ok(KMeansInit::PlusPlus),
            "uniform" | "random" => Ok(KMeansInit::Uniform),
            other => Err(format!("unknown k-means init {other:?} (expected plusplus or uniform)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centers(points: &[Vec<f64>], c: usize, init: KMeansInit, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    match init {
        KMeansInit::Uniform => rand::seq::index::sample(rng, n, c)
            .into_iter()
            .map(|i| points[i].clone())
            .collect(),
        KMeansInit::PlusPlus => {
            let mut chosen = vec![false; n];
            let first = rng.random_range(0..n);
            chosen[first] = true;
            let mut centers = vec![points[first].clone()];
            let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
            while centers.len() < c {
                let total: f64 = d2.iter().sum();
                let pick = if total > 0.0 {
                    let mut r = rng.random::<f64>() * total;
                    let mut pick = None;
                    for (i, &w) in d2.iter().enumerate() {
                        if w > 0.0 {
                            pick = Some(i);
                            if r < w {
                                break;
                            }
                            r -= w;
                        }
                    }
                    pick.expect("positive total weight")
                } else {
                    // Every point coincides with a center; take any unused one.
                    let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
                    free[rng.random_range(0..free.len())]
                };
                chosen[pick] = true;
                centers.push(points[pick].clone());
                let last = centers.last().unwrap();
                for (i, p) in points.iter().enumerate() {
                    d2[i] = d2[i].min(sq_dist(p, last));
                }
            }
            centers
        }
    }
}

/// Lloyd's algorithm on the rows of `y`.
///
/// Stops after [`KMEANS_MAX_ITER`] iterations or once no center moves by
/// [`KMEANS_SHIFT_TOL`] or more. A cluster that loses all its points is
/// re-seeded with the point farthest from its current center.
pub fn kmeans(y: &DMatrix<f64>, c: usize, seed: u64, init: KMeansInit) -> Result<KMeansResult> {
    let (n, p) = y.shape();
    if c == 0 || c > n {
        return Err(Error::InvalidArgument(format!("cluster count {c} must lie in [1, n = {n}]")));
    }
    let points: Vec<Vec<f64>> = (0..n).map(|i| y.row(i).iter().copied().collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(&points, c, init, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut iterations = 0;

    for it in 1..=KMEANS_MAX_ITER {
        iterations = it;
        for (i, pt) in points.iter().enumerate() {
            let (lab, d) = nearest(pt, &centers);
            labels[i] = lab;
            dist[i] = d;
        }
        let mut sums = vec![vec![0.0; p]; c];
        let mut counts = vec![0usize; c];
        for (i, pt) in points.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(pt) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for k in 0..c {
            if counts[k] == 0 {
                let far = (0..n)
                    .filter(|&i| !taken[i] && counts[labels[i]] > 1)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    taken[i] = true;
                    counts[labels[i]] -= 1;
                    for (s, v) in sums[labels[i]].iter_mut().zip(&points[i]) {
                        *s -= v;
                    }
                    labels[i] = k;
                    dist[i] = 0.0;
                    counts[k] = 1;
                    sums[k] = points[i].clone();
                }
            }
        }
        let mut max_shift: f64 = 0.0;
        for k in 0..c {
            if counts[k] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            max_shift = max_shift.max(sq_dist(&new, &centers[k]).sqrt());
            centers[k] = new;
        }
        if max_shift < KMEANS_SHIFT_TOL {
            break;
        }
    }
    let inertia = points.iter().zip(&labels).map(|(pt, &k)| sq_dist(pt, &centers[k])).sum();
    Ok(KMeansResult { labels, inertia, iterations })
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method with
/// potentials, O(s³)). Returns `assign[row] = column` and the total weight.
pub fn kuhn_munkres_max(weights: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let s = weights.len();
    if s == 0 {
        return (Vec::new(), 0.0);
    }
    assert!(weights.iter().all(|r| r.len() == s), "kuhn_munkres_max needs a square matrix");
    // Minimize negated weights; rows/columns are 1-based with 0 as sentinel.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0; s + 1];
    let mut v = vec![0.0; s + 1];
    let mut col_owner = vec![0usize; s + 1];
    let mut way = vec![0usize; s + 1];
    for i in 1..=s {
        col_owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; s + 1];
        let mut used = vec![false; s + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=s {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=s {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; s];
    for j in 1..=s {
        assign[col_owner[j] - 1] = j - 1;
    }
    let total = (0..s).map(|i| weights[i][assign[i]]).sum();
    (assign, total)
}

/// Optimal cluster → class assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    /// `(predicted label, true label)` pairs; clusters left without a class
    /// (more clusters than classes) are absent.
    pub pairs: Vec<(usize, usize)>,
    /// Number of samples whose mapped prediction equals the truth.
    pub matched: usize,
}

impl LabelMapping {
    pub fn map(&self, pred: usize) -> Option<usize> {
        self.pairs.iter().find(|(p, _)| *p == pred).map(|&(_, t)| t)
    }
}

fn dense_ids(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let dense = labels.iter().map(|l| ids.binary_search(l).unwrap()).collect();
    (dense, ids)
}

/// Contingency counts `m[p][t]` over dense ids, plus the id tables.
pub fn contingency(pred: &[usize], truth: &[usize]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<usize>) {
    assert_eq!(pred.len(), truth.len(), "label vectors differ in length");
    let (dp, pid) = dense_ids(pred);
    let (dt, tid) = dense_ids(truth);
    let mut m = vec![vec![0usize; tid.len()]; pid.len()];
    for (&a, &b) in dp.iter().zip(&dt) {
        m[a][b] += 1;
    }
    (m, pid, tid)
}

/// Injective cluster → class map maximizing the number of agreeing samples.
pub fn best_mapping(pred: &[usize], truth: &[usize]) -> LabelMapping {
    let (m, pid, tid) = contingency(pred, truth);
    let s = pid.len().max(tid.len());
    let w: Vec<Vec<f64>> = (0..s)
        .map(|i| (0..s).map(|j| if i < pid.len() && j < tid.len() { m[i][j] as f64 } else { 0.0 }).collect())
        .collect();
    let (assign, total) = kuhn_munkres_max(&w);
    let pairs = assign
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < pid.len() && j < tid.len())
        .map(|(i, &j)| (pid[i], tid[j]))
        .collect();
    LabelMapping { pairs, matched: total.round() as usize }
}

/// Clustering accuracy under the optimal cluster → class assignment.
pub fn acc(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    best_mapping(pred, truth).matched as f64 / pred.len() as f64
}

/// `I(P, Q) / √(H(P)·H(Q))` with natural-log entropies. Two constant
/// labelings score 1; one constant against a non-constant labeling scores 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let (m, pid, tid) = contingency(pred, truth);
    let nf = n as f64;
    let row: Vec<f64> = m.iter().map(|r| r.iter().sum::<usize>() as f64 / nf).collect();
    let col: Vec<f64> = (0..tid.len()).map(|j| m.iter().map(|r| r[j]).sum::<usize>() as f64 / nf).collect();
    let entropy = |p: &[f64]| -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
    let (hp, hq) = (entropy(&row), entropy(&col));
    if pid.len() == 1 && tid.len() == 1 {
        return 1.0;
    }
    if hp <= 0.0 || hq <= 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for (i, r) in m.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0 {
                let pij = c as f64 / nf;
                mi += pij * (pij / (row[i] * col[j])).ln();
            }
        }
    }
    (mi / (hp * hq).sqrt()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub labels: Vec<usize>,
    pub acc: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringEval {
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    pub per_run: Vec<RunOutcome>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Clusters the samples on the `selected` columns `runs` times (seeds
/// `seed..seed + runs`) with as many clusters as `truth` has classes.
pub fn evaluate_selection(
    x: &DataMatrix,
    selected: &[usize],
    truth: &LabelVector,
    runs: usize,
    seed: u64,
    init: KMeansInit,
) -> Result<ClusteringEval> {
    if selected.is_empty() {
        return Err(Error::InvalidArgument("selected feature set is empty".into()));
    }
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if truth.len() != x.n() {
        return Err(Error::Dimension(format!(
            "{} labels for {} samples",
            truth.len(),
            x.n()
        )));
    }
    let y = x.select_columns(selected)?;
    let c = truth.classes();
    let per_run: Vec<RunOutcome> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let km = kmeans(&y, c, seed.wrapping_add(r), init)?;
            let acc = acc(&km.labels, truth.labels());
            let nmi = nmi(&km.labels, truth.labels());
            Ok(RunOutcome { labels: km.labels, acc, nmi })
        })
        .collect::<Result<_>>()?;
    let (acc_mean, acc_std) = mean_std(&per_run.iter().map(|r| r.acc).collect::<Vec<_>>());
    let (nmi_mean, nmi_std) = mean_std(&per_run.iter().map(|r| r.nmi).collect::<Vec<_>>());
    Ok(ClusteringEval { runs, acc_mean, acc_std, nmi_mean, nmi_std, per_run })
}
