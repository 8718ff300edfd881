//! Run settings and their three layers: built-in defaults, an optional JSON
//! file, and command-line flags (highest precedence).

use std::path::Path;

use serde::{Deserialize, Serialize};
use subsel_core::eval::{KMeansInit, DEFAULT_RUNS};
use subsel_core::graph::{GraphKind, SigmaPolicy, DEFAULT_GRAM_REG};
use subsel_core::solver::SolverConfig;

use crate::CliError;

/// Selection method, including the two evaluation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gloss,
    Glpsl,
    #[value(name = "all_features")]
    AllFeatures,
    Random,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gloss => "gloss",
            Method::Glpsl => "glpsl",
            Method::AllFeatures => "all_features",
            Method::Random => "random",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_KAPPA_GRID: [usize; 9] = [20, 30, 40, 50, 60, 70, 80, 90, 100];
pub const DEFAULT_BETA_GRID: [f64; 7] = [0.01, 0.1, 1.0, 10.0, 40.0, 70.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub method: Method,
    /// Solver parameters; `kappa`, `m`, `graph_kind` and `seed` are shared
    /// with the greedy method and the evaluation.
    pub solver: SolverConfig,
    /// Fixed heat-kernel width; `None` uses the median kNN edge length.
    pub sigma: Option<f64>,
    pub gram_reg: f64,
    /// Whether input CSV files start with a header line.
    pub header: bool,
    pub runs: usize,
    pub init: KMeansInit,
    pub kappa_grid: Vec<usize>,
    pub beta_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    pub methods: Vec<Method>,
    /// Sweep worker threads; `0` uses every core.
    pub jobs: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            method: Method::Gloss,
            solver: SolverConfig::default(),
            sigma: None,
            gram_reg: DEFAULT_GRAM_REG,
            header: false,
            runs: DEFAULT_RUNS,
            init: KMeansInit::PlusPlus,
            kappa_grid: DEFAULT_KAPPA_GRID.to_vec(),
            beta_grid: DEFAULT_BETA_GRID.to_vec(),
            mu_grid: vec![1.0],
            methods: vec![Method::Gloss, Method::Glpsl],
            jobs: 0,
        }
    }
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn sigma_policy(&self) -> SigmaPolicy {
        self.sigma.map_or(SigmaPolicy::MedianEdge, SigmaPolicy::Fixed)
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.solver;
        let mut problems = Vec::new();
        if s.kappa == 0 {
            problems.push("kappa must be at least 1".to_owned());
        }
        if s.k == 0 {
            problems.push("K must be at least 1".to_owned());
        }
        if s.m == 0 {
            problems.push("m must be at least 1".to_owned());
        }
        if self.runs == 0 {
            problems.push("runs must be at least 1".to_owned());
        }
        if !(s.delta_omega > 0.0 && s.delta_omega < 1.0) {
            problems.push(format!("delta_omega = {} must lie in (0, 1)", s.delta_omega));
        }
        for (name, v) in [("mu", s.mu), ("beta", s.beta), ("tol", s.tol)] {
            if !(v.is_finite() && v >= 0.0) {
                problems.push(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if let Some(sigma) = self.sigma {
            if !(sigma.is_finite() && sigma > 0.0) {
                problems.push(format!("sigma = {sigma} must be positive"));
            }
        }
        if !(self.gram_reg.is_finite() && self.gram_reg > 0.0) {
            problems.push(format!("gram_reg = {} must be positive", self.gram_reg));
        }
        if self.kappa_grid.is_empty() || self.kappa_grid.contains(&0) {
            problems.push("kappa grid must be nonempty with entries >= 1".to_owned());
        }
        for (name, grid) in [("beta", &self.beta_grid), ("mu", &self.mu_grid)] {
            if grid.is_empty() || grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                problems.push(format!("{name} grid must be nonempty with finite entries >= 0"));
            }
        }
        if self.methods.is_empty() {
            problems.push("method list must be nonempty".to_owned());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(problems.join("; ")))
        }
    }
}

/// Flags that override [`Settings`]; every field is optional so that an
/// absent flag leaves the file or default value in place.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Selection method
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Number of features to select
    #[arg(long, value_parser = positive_usize)]
    pub kappa: Option<usize>,
    /// Subspace dimension of the factorization
    #[arg(long = "K", alias = "subspace-dim", value_parser = positive_usize)]
    pub k: Option<usize>,
    /// Row-sparsity weight
    #[arg(long, value_parser = nonnegative_f64)]
    pub beta: Option<f64>,
    /// Locality weight
    #[arg(long, value_parser = nonnegative_f64)]
    pub mu: Option<f64>,
    /// Cap on the extrapolation weight, in (0, 1)
    #[arg(long)]
    pub delta_omega: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative objective change that stops the solver early (0 = never)
    #[arg(long, value_parser = nonnegative_f64)]
    pub tol: Option<f64>,
    /// Disable extrapolation (plain proximal steps)
    #[arg(long)]
    pub no_extrapolate: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Similarity graph
    #[arg(long, value_parser = parse_graph)]
    pub graph: Option<GraphKind>,
    /// Neighbours per sample in the kNN graph
    #[arg(long, value_parser = positive_usize)]
    pub m: Option<usize>,
    /// Fixed heat-kernel width (default: median kNN edge length)
    #[arg(long, value_parser = positive_f64)]
    pub sigma: Option<f64>,
    /// Relative Tikhonov shift of the local Gram matrix for LLE weights
    #[arg(long, value_parser = positive_f64)]
    pub gram_reg: Option<f64>,
    /// Input CSV files start with a header line
    #[arg(long)]
    pub header: bool,
    /// K-means restarts per evaluation
    #[arg(long, value_parser = positive_usize)]
    pub runs: Option<usize>,
    /// K-means seeding: plusplus or uniform
    #[arg(long, value_parser = parse_init)]
    pub init: Option<KMeansInit>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Settings) {
        if let Some(v) = self.method {
            s.method = v;
        }
        if let Some(v) = self.kappa {
            s.solver.kappa = v;
        }
        if let Some(v) = self.k {
            s.solver.k = v;
        }
        if let Some(v) = self.beta {
            s.solver.beta = v;
        }
        if let Some(v) = self.mu {
            s.solver.mu = v;
        }
        if let Some(v) = self.delta_omega {
            s.solver.delta_omega = v;
        }
        if let Some(v) = self.max_iter {
            s.solver.max_iter = v;
        }
        if let Some(v) = self.tol {
            s.solver.tol = v;
        }
        if self.no_extrapolate {
            s.solver.extrapolate = false;
        }
        if let Some(v) = self.seed {
            s.solver.seed = v;
        }
        if let Some(v) = self.graph {
            s.solver.graph_kind = v;
        }
        if let Some(v) = self.m {
            s.solver.m = v;
        }
        if let Some(v) = self.sigma {
            s.sigma = Some(v);
        }
        if let Some(v) = self.gram_reg {
            s.gram_reg = v;
        }
        if self.header {
            s.header = true;
        }
        if let Some(v) = self.runs {
            s.runs = v;
        }
        if let Some(v) = self.init {
            s.init = v;
        }
    }
}

/// Grid flags of the sweep command.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct GridOverrides {
    /// Comma-separated kappa values
    #[arg(long, value_delimiter = ',', value_parser = positive_usize)]
    pub kappa_grid: Option<Vec<usize>>,
    /// Comma-separated beta values
    #[arg(long, value_delimiter = ',', value_parser = nonnegative_f64)]
    pub beta_grid: Option<Vec<f64>>,
    /// Comma-separated mu values
    #[arg(long, value_delimiter = ',', value_parser = nonnegative_f64)]
    pub mu_grid: Option<Vec<f64>>,
    /// Comma-separated methods (gloss, glpsl)
    #[arg(long, value_delimiter = ',', value_enum)]
    pub methods: Option<Vec<Method>>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl GridOverrides {
    pub fn apply(&self, s: &mut Settings) {
        if let Some(v) = &self.kappa_grid {
            s.kappa_grid = v.clone();
        }
        if let Some(v) = &self.beta_grid {
            s.beta_grid = v.clone();
        }
        if let Some(v) = &self.mu_grid {
            s.mu_grid = v.clone();
        }
        if let Some(v) = &self.methods {
            s.methods = v.clone();
        }
        if let Some(v) = self.jobs {
            s.jobs = v;
        }
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn nonnegative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(v) => Err(format!("{v} must be finite and >= 0")),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("{v} must be finite and > 0")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_graph(s: &str) -> Result<GraphKind, String> {
    s.parse()
}

fn parse_init(s: &str) -> Result<KMeansInit, String> {
    s.parse()
}
