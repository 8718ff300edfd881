//! Unsupervised feature selection by subspace learning with local structure
//! preservation.
//!
//! Two selectors are provided:
//!
//! * [`greedy::glpsl_select`] picks features one at a time by correlation with
//!   the current reconstruction residual plus a graph locality score.
//! * [`solver::gloss_run`] learns a row-sparse nonnegative projection `W`
//!   with an accelerated block coordinate descent and ranks features by the
//!   row norms of `W`.
//!
//! Selections are evaluated by clustering ([`eval`]), and [`oracle`] holds
//! brute-force reference implementations used for verification.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod greedy;
pub mod linalg;
pub mod oracle;
pub mod prox;
pub mod solver;

pub use error::{Error, Result};
