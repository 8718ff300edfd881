//! Command-line front end: `select`, `eval`, `sweep`, `synth` and `verify`.
//!
//! Exit codes: 0 on success, 1 for data or runtime errors, 2 for usage
//! errors (including invalid flags and config files).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use subsel_core::dataset::{load_labels, save_labels, save_matrix, synthesize_labeled, synthesize_planted};
use subsel_core::oracle;

pub mod pipeline;
pub mod record;
pub mod settings;
pub mod sweep;

use record::RunRecord;
use settings::{GridOverrides, Method, Overrides, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] subsel_core::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "subsel", version, about = "Unsupervised feature selection by subspace learning")]
pub struct Cli {
    /// JSON settings file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective settings as JSON and exit
    #[arg(long, global = true)]
    pub show_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select features and print the ranking as JSON
    Select(SelectArgs),
    /// Cluster on selected features and report ACC / NMI as CSV
    Eval(EvalArgs),
    /// Evaluate a κ × β × μ grid
    Sweep(SweepArgs),
    /// Generate a synthetic planted instance
    Synth(SynthArgs),
    /// Run the reference oracles against the production routines
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Sample matrix (CSV, one sample per row)
    #[arg(long)]
    pub input: PathBuf,
    /// Write the JSON here instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Ground-truth labels, one integer per line
    #[arg(long)]
    pub labels: PathBuf,
    /// Ranking JSON from `select`; without it the selection is run here
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Extra comparison rows
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Dataset name for the CSV (default: input file stem)
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    /// Every feature
    All,
    /// κ features drawn uniformly with the run seed
    Random,
    /// Both of the above
    Both,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Directory for results.csv, timings.csv and the κ × β matrices
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub grid: GridOverrides,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 30)]
    pub d: usize,
    /// Number of planted (independent) columns
    #[arg(long, default_value_t = 5)]
    pub kappa: usize,
    /// Noise standard deviation added to derived columns
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add class structure with this many balanced classes
    #[arg(long)]
    pub classes: Option<usize>,
    /// Class-mean offset on the planted columns
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long)]
    pub output: PathBuf,
    /// Labels file (requires --classes)
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// JSON with the planted column indices
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Smaller batches (seconds instead of tens of seconds)
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Defaults, then the config file, then flags.
pub fn resolve_settings(config: Option<&Path>, overrides: Option<&Overrides>, grid: Option<&GridOverrides>) -> Result<Settings, CliError> {
    let mut s = match config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    if let Some(o) = overrides {
        o.apply(&mut s);
    }
    if let Some(g) = grid {
        g.apply(&mut s);
    }
    s.validate()?;
    Ok(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { context: path.display().to_string(), source }
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map(|mut s| {
        s.push('\n');
        s
    })
    .map_err(|e| CliError::Data(e.to_string()))
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    let (overrides, grid) = match &cli.command {
        Some(Command::Select(a)) => (Some(&a.overrides), None),
        Some(Command::Eval(a)) => (Some(&a.overrides), None),
        Some(Command::Sweep(a)) => (Some(&a.overrides), Some(&a.grid)),
        _ => (None, None),
    };
    let settings = resolve_settings(config, overrides, grid)?;
    if cli.show_config {
        return emit(&to_json(&settings)?, None);
    }
    match cli.command {
        None => Err(CliError::Usage("no subcommand given (try --help)".into())),
        Some(Command::Select(a)) => cmd_select(&a, &settings),
        Some(Command::Eval(a)) => cmd_eval(&a, &settings),
        Some(Command::Sweep(a)) => cmd_sweep(&a, &settings),
        Some(Command::Synth(a)) => cmd_synth(&a),
        Some(Command::Verify(a)) => cmd_verify(&a),
    }
}

fn check_selection_method(method: Method) -> Result<(), CliError> {
    match method {
        Method::Gloss | Method::Glpsl => Ok(()),
        other => Err(CliError::Usage(format!("{other} is a baseline; use eval --baseline"))),
    }
}

pub fn cmd_select(args: &SelectArgs, settings: &Settings) -> Result<(), CliError> {
    check_selection_method(settings.method)?;
    let prep = pipeline::prepare_file(&args.input, settings)?;
    let record = pipeline::select(&prep, settings, settings.method, settings.solver.kappa)?;
    let mut text = record.to_json()?;
    text.push('\n');
    emit(&text, args.output.as_deref())
}

/// Columns of the `eval` CSV.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvalRow {
    pub method: Method,
    pub dataset: String,
    pub kappa: usize,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub m: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    pub seconds: f64,
}

impl EvalRow {
    pub fn from_record(r: &RunRecord) -> Result<Self, CliError> {
        let m = r.metrics.as_ref().ok_or_else(|| CliError::Data("record has no metrics".into()))?;
        let gloss = r.method == Method::Gloss;
        Ok(Self {
            method: r.method,
            dataset: r.dataset.clone(),
            kappa: r.selected.len(),
            beta: gloss.then_some(r.config.solver.beta),
            mu: gloss.then_some(r.config.solver.mu),
            k: gloss.then_some(r.config.solver.k),
            m: r.config.solver.m,
            acc_mean: m.acc_mean,
            acc_std: m.acc_std,
            nmi_mean: m.nmi_mean,
            nmi_std: m.nmi_std,
            seconds: r.select_seconds + r.eval_seconds,
        })
    }
}

/// The fields of a ranking file that `eval` needs.
#[derive(Debug, Deserialize)]
struct RankingFile {
    method: Method,
    selected: Vec<usize>,
    #[serde(default)]
    select_seconds: f64,
    /// Settings the ranking was produced with, when it came from `select`.
    #[serde(default)]
    config: Option<Settings>,
}

pub fn eval_records(args: &EvalArgs, settings: &Settings) -> Result<Vec<RunRecord>, CliError> {
    let labels = load_labels(&args.labels)?;
    let mut prep = pipeline::prepare_file(&args.input, settings)?;
    if let Some(name) = &args.dataset {
        prep.dataset = name.clone();
    }
    let mut records = Vec::new();
    let primary = match &args.ranking {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let file: RankingFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("invalid ranking {}: {e}", path.display())))?;
            if let Some(&bad) = file.selected.iter().find(|&&j| j >= prep.x.d()) {
                return Err(CliError::Data(format!("ranking index {bad} out of range for d = {}", prep.x.d())));
            }
            let kappa = args.overrides.kappa.unwrap_or(file.selected.len()).min(file.selected.len());
            let mut r = pipeline::select(&prep, settings, Method::AllFeatures, 0)?;
            r.method = file.method;
            r.selected = file.selected[..kappa].to_vec();
            if let Some(c) = file.config {
                r.config = c;
            }
            r.config.method = file.method;
            r.config.solver.kappa = kappa;
            r.select_seconds = file.select_seconds;
            r
        }
        None => {
            check_selection_method(settings.method)?;
            pipeline::select(&prep, settings, settings.method, settings.solver.kappa)?
        }
    };
    let kappa = primary.selected.len();
    records.push(primary);
    let (all, random) = match args.baseline {
        None => (false, false),
        Some(Baseline::All) => (true, false),
        Some(Baseline::Random) => (false, true),
        Some(Baseline::Both) => (true, true),
    };
    if all {
        records.push(pipeline::select(&prep, settings, Method::AllFeatures, prep.x.d())?);
    }
    if random {
        records.push(pipeline::select(&prep, settings, Method::Random, kappa)?);
    }
    for r in &mut records {
        pipeline::evaluate(&prep, &labels, settings, r)?;
    }
    Ok(records)
}

pub fn cmd_eval(args: &EvalArgs, settings: &Settings) -> Result<(), CliError> {
    let records = eval_records(args, settings)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &records {
        r.check_finite()?;
        w.serialize(EvalRow::from_record(r)?).map_err(|e| CliError::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    emit(&String::from_utf8_lossy(&bytes), args.output.as_deref())
}

pub fn cmd_sweep(args: &SweepArgs, settings: &Settings) -> Result<(), CliError> {
    let labels = load_labels(&args.labels)?;
    let mut prep = pipeline::prepare_file(&args.input, settings)?;
    if let Some(name) = &args.dataset {
        prep.dataset = name.clone();
    }
    let out = sweep::run_sweep(&prep, &labels, settings)?;
    let files = sweep::write_outputs(&out, &args.out_dir)?;
    let failed = out.failed_cells();
    eprintln!(
        "{} cells ({} failed); wrote {} files to {}",
        out.rows.len(),
        failed,
        files.len(),
        args.out_dir.display()
    );
    if failed == out.rows.len() {
        return Err(CliError::Data("every sweep cell failed".into()));
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.labels_out.is_some() && args.classes.is_none() {
        return Err(CliError::Usage("--labels-out requires --classes".into()));
    }
    let inst = match args.classes {
        Some(c) => {
            let (inst, labels) =
                synthesize_labeled(args.n, args.d, args.kappa, c, args.separation, args.sigma, args.seed)?;
            if let Some(p) = &args.labels_out {
                save_labels(&labels, p)?;
            }
            inst
        }
        None => synthesize_planted(args.n, args.d, args.kappa, args.sigma, args.seed)?,
    };
    save_matrix(inst.matrix.values(), &args.output)?;
    if let Some(p) = &args.truth_out {
        let truth = serde_json::json!({
            "true_features": inst.true_features,
            "noise_sigma": inst.noise_sigma,
            "seed": inst.seed,
        });
        std::fs::write(p, to_json(&truth)?).map_err(io_err(p))?;
    }
    Ok(())
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let reports = if args.quick {
        vec![
            oracle::verify_prox(100, 100, oracle::PROX_ORACLE_ITERS, 1e-6, args.seed),
            oracle::verify_greedy(50, 1e-10, args.seed),
            oracle::verify_nested_subsets(5, 6, 1e-10, args.seed),
            oracle::verify_assignment(50, 7, args.seed),
            oracle::verify_objective(20, 1e-10, args.seed),
            oracle::verify_gradient(10, 1e-5, args.seed),
            oracle::verify_spectral(5, 30, 1e-6, args.seed),
        ]
    } else {
        oracle::verify_all(args.seed)
    };
    emit(&to_json(&reports)?, args.output.as_deref())?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.check.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("oracle checks failed: {}", failed.join(", "))))
    }
}
