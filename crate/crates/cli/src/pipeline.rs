//! Load → normalize → graph → select → evaluate, shared by every command.

use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subsel_core::dataset::{load_matrix, normalize_features, DataMatrix, LabelVector};
use subsel_core::eval::evaluate_selection;
use subsel_core::graph::{build_graph, laplacian, LaplacianMatrix, SimilarityGraph};
use subsel_core::greedy::glpsl_select;
use subsel_core::solver::{gloss_run, SolverConfig};

use crate::record::{Metadata, Metrics, RunRecord};
use crate::settings::{Method, Settings};
use crate::CliError;

/// Normalized data with its graph, ready for any method.
pub struct Prepared {
    pub dataset: String,
    pub x: DataMatrix,
    pub zero_columns: Vec<usize>,
    pub graph: SimilarityGraph,
    pub laplacian: LaplacianMatrix,
    pub graph_seconds: f64,
}

pub fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".to_owned(), |s| s.to_string_lossy().into_owned())
}

pub fn prepare_file(path: &Path, settings: &Settings) -> Result<Prepared, CliError> {
    let raw = load_matrix(path, settings.header)?;
    prepare(raw, dataset_name(path), settings)
}

pub fn prepare(raw: DataMatrix, dataset: String, settings: &Settings) -> Result<Prepared, CliError> {
    let started = Instant::now();
    let norm = normalize_features(&raw);
    let x = norm.matrix;
    let s = &settings.solver;
    let graph = build_graph(&x, s.graph_kind, s.m, settings.sigma_policy(), settings.gram_reg)?;
    let laplacian = laplacian(&graph);
    Ok(Prepared {
        dataset,
        x,
        zero_columns: norm.zero_columns,
        graph,
        laplacian,
        graph_seconds: started.elapsed().as_secs_f64(),
    })
}

fn base_metadata(prep: &Prepared, settings: &Settings) -> Metadata {
    let mut warnings = Vec::new();
    if !prep.zero_columns.is_empty() {
        warnings.push(format!("{} all-zero column(s) left unscaled", prep.zero_columns.len()));
    }
    Metadata {
        n: prep.x.n(),
        d: prep.x.d(),
        graph: prep.graph.kind,
        m: prep.graph.m,
        sigma: prep.graph.sigma,
        gram_reg: settings.gram_reg,
        normalized_before_graph: true,
        zero_columns: prep.zero_columns.clone(),
        iterations: None,
        restarts: None,
        nonmonotone_steps: None,
        momentum_reset_on_restart: false,
        objective_history: Vec::new(),
        residual_history: Vec::new(),
        warnings,
    }
}

/// Runs `method` with `kappa` features. For GLoSS the full ordering is kept,
/// so any shorter prefix is also a valid top-κ selection.
pub fn select(prep: &Prepared, settings: &Settings, method: Method, kappa: usize) -> Result<RunRecord, CliError> {
    let started = Instant::now();
    let d = prep.x.d();
    if kappa > d && matches!(method, Method::Gloss | Method::Glpsl | Method::Random) {
        return Err(CliError::Data(format!("kappa = {kappa} exceeds the number of features d = {d}")));
    }
    let mut metadata = base_metadata(prep, settings);
    let mut config = settings.clone();
    config.method = method;
    config.solver.kappa = kappa;
    let (selected, scores, ordering) = match method {
        Method::Gloss => {
            let solver = SolverConfig { kappa, ..settings.solver.clone() };
            let res = gloss_run(&prep.x, &prep.laplacian, &solver)?;
            metadata.iterations = Some(res.state.iter);
            metadata.restarts = Some(res.state.restarts);
            metadata.nonmonotone_steps = Some(res.state.nonmonotone_steps);
            if res.state.nonmonotone_steps > 0 {
                metadata.warnings.push(format!(
                    "objective rose on {} accepted step(s); XW is likely ill-conditioned",
                    res.state.nonmonotone_steps
                ));
            }
            metadata.objective_history = res.state.objective_history;
            (res.ranking.selected, Some(res.ranking.scores), Some(res.ranking.ordering))
        }
        Method::Glpsl => {
            let sel = glpsl_select(&prep.x, &prep.graph, kappa)?;
            metadata.iterations = Some(sel.selected.len());
            metadata.residual_history = sel.residual_history;
            (sel.selected, None, None)
        }
        Method::AllFeatures => {
            config.solver.kappa = d;
            ((0..d).collect(), None, None)
        }
        Method::Random => {
            // Draw order is kept as the ordering so that prefixes are
            // themselves uniform random subsets.
            let mut rng = ChaCha8Rng::seed_from_u64(settings.solver.seed);
            let order = sample(&mut rng, d, kappa).into_vec();
            let mut idx = order.clone();
            idx.sort_unstable();
            (idx, None, Some(order))
        }
    };
    Ok(RunRecord {
        method,
        dataset: prep.dataset.clone(),
        config,
        selected,
        scores,
        ordering,
        metrics: None,
        select_seconds: started.elapsed().as_secs_f64() + prep.graph_seconds,
        eval_seconds: 0.0,
        metadata,
    })
}

/// Clusters on `selected` and stores the metrics in the record.
pub fn evaluate(
    prep: &Prepared,
    labels: &LabelVector,
    settings: &Settings,
    record: &mut RunRecord,
) -> Result<(), CliError> {
    if labels.len() != prep.x.n() {
        return Err(CliError::Data(format!(
            "{} labels for {} samples",
            labels.len(),
            prep.x.n()
        )));
    }
    let started = Instant::now();
    let eval = evaluate_selection(
        &prep.x,
        &record.selected,
        labels,
        settings.runs,
        settings.solver.seed,
        settings.init,
    )?;
    record.metrics = Some(Metrics::from(&eval));
    record.eval_seconds = started.elapsed().as_secs_f64();
    Ok(())
}
