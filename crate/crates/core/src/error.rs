use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the feature-selection toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV input: {0}")]
    Csv(#[from] csv::Error),

    /// `row` and `column` are 1-based and count data rows only (a header line is not counted).
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("input contains no data rows")]
    Empty,

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("heat-kernel width resolved to {0}; all neighbouring samples coincide")]
    DegenerateSigma(f64),

    #[error("reconstruction weights of row {row} sum to {sum:e}; cannot normalize")]
    DegenerateWeights { row: usize, sum: f64 },

    #[error("W has a negative entry {value:e} at ({row}, {column})")]
    Infeasible { row: usize, column: usize, value: f64 },

    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("power iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
