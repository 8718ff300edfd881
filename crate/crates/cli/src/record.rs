//! The serializable result of one selection (and optional evaluation) run.

use serde::{Deserialize, Serialize};
use subsel_core::eval::ClusteringEval;
use subsel_core::graph::GraphKind;

use crate::settings::{Method, Settings};
use crate::CliError;

/// Clustering summary without the per-run label vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    pub per_run_acc: Vec<f64>,
    pub per_run_nmi: Vec<f64>,
}

impl From<&ClusteringEval> for Metrics {
    fn from(e: &ClusteringEval) -> Self {
        Self {
            runs: e.runs,
            acc_mean: e.acc_mean,
            acc_std: e.acc_std,
            nmi_mean: e.nmi_mean,
            nmi_std: e.nmi_std,
            per_run_acc: e.per_run.iter().map(|r| r.acc).collect(),
            per_run_nmi: e.per_run.iter().map(|r| r.nmi).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub n: usize,
    pub d: usize,
    pub graph: GraphKind,
    pub m: usize,
    /// Heat-kernel width actually used (LPP only).
    pub sigma: Option<f64>,
    pub gram_reg: f64,
    /// Columns are scaled to unit norm before the graph is built and before
    /// selection.
    pub normalized_before_graph: bool,
    /// All-zero input columns, left unscaled.
    pub zero_columns: Vec<usize>,
    pub iterations: Option<usize>,
    pub restarts: Option<usize>,
    /// Accepted steps on which the objective rose by more than round-off.
    pub nonmonotone_steps: Option<usize>,
    /// Whether the momentum sequence `t` is reset after a restart; it is not.
    pub momentum_reset_on_restart: bool,
    pub objective_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub dataset: String,
    pub config: Settings,
    /// Selected feature indices: rank order for GLoSS and GLPSL, ascending
    /// for the baselines.
    pub selected: Vec<usize>,
    /// Per-feature scores (GLoSS only).
    pub scores: Option<Vec<f64>>,
    /// GLoSS: every feature by descending score. Random: the draw order.
    pub ordering: Option<Vec<usize>>,
    pub metrics: Option<Metrics>,
    pub select_seconds: f64,
    pub eval_seconds: f64,
    pub metadata: Metadata,
}

impl RunRecord {
    /// Every `f64` that is not an explicitly optional field must be finite.
    pub fn check_finite(&self) -> Result<(), CliError> {
        let mut values: Vec<(&str, f64)> = vec![
            ("select_seconds", self.select_seconds),
            ("eval_seconds", self.eval_seconds),
            ("gram_reg", self.metadata.gram_reg),
        ];
        if let Some(s) = self.metadata.sigma {
            values.push(("sigma", s));
        }
        values.extend(self.scores.iter().flatten().map(|&v| ("scores", v)));
        values.extend(self.metadata.objective_history.iter().map(|&v| ("objective_history", v)));
        values.extend(self.metadata.residual_history.iter().map(|&v| ("residual_history", v)));
        if let Some(m) = &self.metrics {
            values.extend([
                ("acc_mean", m.acc_mean),
                ("acc_std", m.acc_std),
                ("nmi_mean", m.nmi_mean),
                ("nmi_std", m.nmi_std),
            ]);
            values.extend(m.per_run_acc.iter().chain(&m.per_run_nmi).map(|&v| ("per_run", v)));
        }
        match values.into_iter().find(|(_, v)| !v.is_finite()) {
            Some((name, v)) => Err(CliError::Data(format!("non-finite value {v} in {name}"))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        self.check_finite()?;
        serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))
    }
}
