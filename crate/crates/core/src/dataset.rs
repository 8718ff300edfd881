//! Sample matrices, label vectors, CSV ingestion and synthetic instances.
//!
//! A [`DataMatrix`] stores `n` samples as rows and `d` features as columns.
//! Feature selection works on column-normalized data, so
//! [`normalize_features`] is normally the first thing applied after loading.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on column norms of a normalized matrix.
pub const NORM_TOL: f64 = 1e-12;

/// Dense `n × d` sample matrix, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    normalized: bool,
}

impl DataMatrix {
    /// Wraps `values` after checking that it has at least two rows, one column
    /// and only finite entries.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, d) = values.shape();
        if n < 2 {
            return Err(Error::Dimension(format!("need at least 2 samples, got {n}")));
        }
        if d < 1 {
            return Err(Error::Dimension("need at least 1 feature".into()));
        }
        for j in 0..d {
            for i in 0..n {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i + 1, column: j + 1 });
                }
            }
        }
        Ok(Self { values, normalized: false })
    }

    /// Builds a matrix from row-major samples.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Ragged { row: i + 1, expected: d, found: r.len() });
            }
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Copy restricted to the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<DMatrix<f64>> {
        if let Some(&bad) = columns.iter().find(|&&j| j >= self.d()) {
            return Err(Error::InvalidArgument(format!(
                "feature index {bad} out of range for d = {}",
                self.d()
            )));
        }
        Ok(self.values.select_columns(columns.iter()))
    }
}

/// Ground-truth class labels, re-indexed to the dense range `[0, c)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    classes: usize,
}

impl LabelVector {
    /// Re-indexes arbitrary integer ids to `[0, c)` in ascending id order.
    pub fn from_raw(raw: &[i64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Empty);
        }
        let mut ids = BTreeMap::new();
        for &r in raw {
            ids.entry(r).or_insert(0usize);
        }
        for (k, v) in ids.values_mut().enumerate() {
            *v = k;
        }
        let labels = raw.iter().map(|r| ids[r]).collect();
        Ok(Self { labels, classes: ids.len() })
    }

    /// Accepts labels that already satisfy the dense-range invariant.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty);
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; classes];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "class {missing} has no samples; labels must cover [0, {classes})"
            )));
        }
        Ok(Self { labels, classes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Reads a comma-separated numeric matrix.
///
/// `has_header` skips exactly one leading line. Fields are trimmed of
/// surrounding spaces, but whitespace is never treated as a delimiter.
pub fn load_matrix(path: impl AsRef<Path>, has_header: bool) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    read_matrix(file, has_header)
}

/// [`load_matrix`] over any reader.
pub fn read_matrix<R: std::io::Read>(reader: R, has_header: bool) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Ragged { row, expected, found: record.len() });
        }
        let mut values = Vec::with_capacity(expected);
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                value: field.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column: c + 1 });
            }
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    DataMatrix::from_rows(&rows)
}

/// Writes the matrix as CSV using shortest round-trip float formatting.
pub fn save_matrix(x: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io { path: path.to_owned(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    write_matrix(x, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_matrix<W: Write>(x: &DMatrix<f64>, out: &mut W) -> std::io::Result<()> {
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if j > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{}", x[(i, j)])?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads one integer label per line; blank lines are ignored.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    parse_labels(&text)
}

pub fn parse_labels(text: &str) -> Result<LabelVector> {
    let mut raw = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line.parse().map_err(|_| Error::Parse {
            row: i + 1,
            column: 1,
            value: line.to_owned(),
        })?;
        raw.push(v);
    }
    LabelVector::from_raw(&raw)
}

pub fn save_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io { path: path.to_owned(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for l in labels.labels() {
        writeln!(out, "{l}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Result of [`normalize_features`]: the unit-column matrix plus the indices
/// of all-zero columns, which are left untouched.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub matrix: DataMatrix,
    pub zero_columns: Vec<usize>,
}

/// Scales every nonzero column to unit ℓ2 norm.
pub fn normalize_features(x: &DataMatrix) -> Normalized {
    let mut values = x.values.clone();
    let mut zero_columns = Vec::new();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            zero_columns.push(j);
        } else {
            col /= norm;
        }
    }
    Normalized { matrix: DataMatrix { values, normalized: true }, zero_columns }
}

/// Synthetic matrix with a known set of generating columns.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub matrix: DataMatrix,
    /// Sorted ascending.
    pub true_features: Vec<usize>,
    pub noise_sigma: f64,
    pub seed: u64,
}

// Weight range of the dominant planted column in a derived column, and the
// upper bound of the weights on the other planted columns.
const DOMINANT_WEIGHT: (f64, f64) = (0.8, 1.2);
const MIXING_WEIGHT: f64 = 1.0;

/// Generates `n × d` data in which `kappa` columns are i.i.d. standard normal
/// and every other column is a nonnegative combination of them plus Gaussian
/// noise of scale `noise_sigma`.
///
/// Each derived column is anchored on one planted column (assigned
/// round-robin) with weight in `[0.8, 1.2)` and picks up weights in
/// `[0, 1)` from the remaining planted columns.
pub fn synthesize_planted(
    n: usize,
    d: usize,
    kappa: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<PlantedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (values, true_features) = planted_values(n, d, kappa, noise_sigma, &mut rng, |_, _| 0.0)?;
    Ok(PlantedInstance { matrix: DataMatrix::new(values)?, true_features, noise_sigma, seed })
}

/// Planted instance with class structure: each planted column carries a
/// class-dependent mean offset of magnitude about `separation`, so the
/// class signal lives in the planted features and leaks into the derived
/// ones through the mixing weights. Labels are balanced (`i mod classes`).
pub fn synthesize_labeled(
    n: usize,
    d: usize,
    kappa: usize,
    classes: usize,
    separation: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(PlantedInstance, LabelVector)> {
    if classes < 1 || classes > n {
        return Err(Error::InvalidArgument(format!("classes = {classes} must lie in [1, n = {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..kappa).map(|_| separation * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let (values, true_features) =
        planted_values(n, d, kappa, noise_sigma, &mut rng, |i, p| means[labels[i]][p])?;
    let instance =
        PlantedInstance { matrix: DataMatrix::new(values)?, true_features, noise_sigma, seed };
    Ok((instance, LabelVector::new(labels)?))
}

fn planted_values(
    n: usize,
    d: usize,
    kappa: usize,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
    offset: impl Fn(usize, usize) -> f64,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if kappa > d {
        return Err(Error::InvalidArgument(format!("kappa = {kappa} exceeds d = {d}")));
    }
    if kappa == 0 {
        return Err(Error::InvalidArgument("kappa must be at least 1".into()));
    }
    if n < kappa {
        return Err(Error::InvalidArgument(format!("n = {n} is smaller than kappa = {kappa}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma} must be >= 0")));
    }
    let mut true_features = sample(rng, d, kappa).into_vec();
    true_features.sort_unstable();

    let mut values = DMatrix::zeros(n, d);
    for (p, &j) in true_features.iter().enumerate() {
        for i in 0..n {
            values[(i, j)] = rng.sample::<f64, _>(StandardNormal) + offset(i, p);
        }
    }
    let mut anchor = 0usize;
    for j in 0..d {
        if true_features.binary_search(&j).is_ok() {
            continue;
        }
        let weights: Vec<f64> = (0..kappa)
            .map(|p| {
                if p == anchor {
                    rng.random_range(DOMINANT_WEIGHT.0..DOMINANT_WEIGHT.1)
                } else {
                    rng.random::<f64>() * MIXING_WEIGHT
                }
            })
            .collect();
        anchor = (anchor + 1) % kappa;
        for i in 0..n {
            let mut v = 0.0;
            for (p, &src) in true_features.iter().enumerate() {
                v += weights[p] * values[(i, src)];
            }
            if noise_sigma > 0.0 {
                v += noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
            values[(i, j)] = v;
        }
    }
    Ok((values, true_features))
}
