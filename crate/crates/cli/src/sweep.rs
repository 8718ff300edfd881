//! Grid sweep over κ × β × μ.
//!
//! A GLoSS ranking does not depend on κ, so the solver runs once per (β, μ)
//! and every κ cell evaluates a prefix of that ranking. GLPSL has no β or μ
//! and its pick order is likewise κ-independent, so one greedy run at the
//! largest κ covers its whole column. Cells are evaluated on a bounded
//! worker pool and written sorted by (method, κ, β, μ).

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use subsel_core::dataset::LabelVector;
use subsel_core::eval::evaluate_selection;

use crate::pipeline::{select, Prepared};
use crate::settings::{Method, Settings};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub dataset: String,
    pub kappa: usize,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub m: usize,
    pub seed: u64,
    pub runs: usize,
    pub status: String,
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub nmi_mean: Option<f64>,
    pub nmi_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub method: Method,
    pub kappa: usize,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub select_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub timings: Vec<TimingRow>,
}

impl SweepOutput {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }
}

/// One selection shared by several cells.
struct Unit {
    method: Method,
    beta: Option<f64>,
    mu: Option<f64>,
}

struct UnitResult {
    method: Method,
    beta: Option<f64>,
    mu: Option<f64>,
    ordering: Result<Vec<usize>, String>,
    seconds: f64,
}

fn dedup_sorted_f64(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Runs the sweep and returns sorted rows; nothing is written.
pub fn run_sweep(prep: &Prepared, labels: &LabelVector, settings: &Settings) -> Result<SweepOutput, CliError> {
    if labels.len() != prep.x.n() {
        return Err(CliError::Data(format!("{} labels for {} samples", labels.len(), prep.x.n())));
    }
    let mut kappas = settings.kappa_grid.clone();
    kappas.sort_unstable();
    kappas.dedup();
    let betas = dedup_sorted_f64(&settings.beta_grid);
    let mus = dedup_sorted_f64(&settings.mu_grid);
    let mut methods = settings.methods.clone();
    methods.sort();
    methods.dedup();
    if methods.contains(&Method::AllFeatures) {
        return Err(CliError::Usage("all_features has no kappa and cannot be swept".into()));
    }

    let d = prep.x.d();
    let top = kappas.iter().copied().filter(|&k| k <= d).max();

    let mut units = Vec::new();
    for &method in &methods {
        match method {
            Method::Gloss => {
                for &beta in &betas {
                    for &mu in &mus {
                        units.push(Unit { method, beta: Some(beta), mu: Some(mu) });
                    }
                }
            }
            _ => units.push(Unit { method, beta: None, mu: None }),
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| CliError::Data(format!("cannot start worker pool: {e}")))?;

    pool.install(|| {
        let unit_results: Vec<UnitResult> = units
            .par_iter()
            .map(|u| {
                let started = Instant::now();
                let ordering = match top {
                    None => Err(format!("every kappa in the grid exceeds d = {d}")),
                    Some(top) => {
                        let mut s = settings.clone();
                        if let (Some(b), Some(m)) = (u.beta, u.mu) {
                            s.solver.beta = b;
                            s.solver.mu = m;
                        }
                        select(prep, &s, u.method, top)
                            .map(|r| r.ordering.unwrap_or(r.selected))
                            .map_err(|e| e.to_string())
                    }
                };
                UnitResult {
                    method: u.method,
                    beta: u.beta,
                    mu: u.mu,
                    ordering,
                    seconds: started.elapsed().as_secs_f64(),
                }
            })
            .collect();

        let cells: Vec<(&UnitResult, usize)> =
            unit_results.iter().flat_map(|u| kappas.iter().map(move |&k| (u, k))).collect();
        let mut out: Vec<(SweepRow, TimingRow)> = cells
            .par_iter()
            .map(|&(u, kappa)| {
                let started = Instant::now();
                let outcome = match &u.ordering {
                    _ if kappa > d => Err(format!("kappa = {kappa} exceeds d = {d}")),
                    Err(e) => Err(e.clone()),
                    Ok(order) => evaluate_selection(
                        &prep.x,
                        &order[..kappa],
                        labels,
                        settings.runs,
                        settings.solver.seed,
                        settings.init,
                    )
                    .map_err(|e| e.to_string()),
                };
                let eval_seconds = started.elapsed().as_secs_f64();
                let (status, metrics) = match outcome {
                    Ok(e) => ("ok".to_owned(), Some(e)),
                    Err(msg) => (format!("error: {msg}"), None),
                };
                let row = SweepRow {
                    method: u.method,
                    dataset: prep.dataset.clone(),
                    kappa,
                    beta: u.beta,
                    mu: u.mu,
                    k: (u.method == Method::Gloss).then_some(settings.solver.k),
                    m: settings.solver.m,
                    seed: settings.solver.seed,
                    runs: settings.runs,
                    status,
                    acc_mean: metrics.as_ref().map(|e| e.acc_mean),
                    acc_std: metrics.as_ref().map(|e| e.acc_std),
                    nmi_mean: metrics.as_ref().map(|e| e.nmi_mean),
                    nmi_std: metrics.as_ref().map(|e| e.nmi_std),
                };
                let timing = TimingRow {
                    method: u.method,
                    kappa,
                    beta: u.beta,
                    mu: u.mu,
                    select_seconds: u.seconds,
                    eval_seconds,
                };
                (row, timing)
            })
            .collect();
        out.sort_by(|(a, _), (b, _)| {
            let key = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
            a.method
                .cmp(&b.method)
                .then(a.kappa.cmp(&b.kappa))
                .then(key(a.beta).total_cmp(&key(b.beta)))
                .then(key(a.mu).total_cmp(&key(b.mu)))
        });
        let (rows, timings) = out.into_iter().unzip();
        Ok(SweepOutput { rows, timings })
    })
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|source| CliError::Io { context: path.display().to_string(), source })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush().map_err(|source| CliError::Io { context: path.display().to_string(), source })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes `results.csv`, `timings.csv` and one κ × β matrix per
/// (method, metric, μ) into `dir`. Returns the files written.
pub fn write_outputs(out: &SweepOutput, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { context: dir.display().to_string(), source })?;
    let mut written = Vec::new();
    let results = dir.join("results.csv");
    write_csv(&results, &out.rows)?;
    written.push(results);
    let timings = dir.join("timings.csv");
    write_csv(&timings, &out.timings)?;
    written.push(timings);

    type Metric = fn(&SweepRow) -> Option<f64>;
    let metrics: [(&str, Metric); 4] = [
        ("acc_mean", |r| r.acc_mean),
        ("acc_std", |r| r.acc_std),
        ("nmi_mean", |r| r.nmi_mean),
        ("nmi_std", |r| r.nmi_std),
    ];
    let mut groups: Vec<(Method, Option<f64>)> = out.rows.iter().map(|r| (r.method, r.mu)).collect();
    groups.dedup();
    groups.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.unwrap_or(-1.0).total_cmp(&b.1.unwrap_or(-1.0))));
    groups.dedup();

    for (method, mu) in groups {
        let rows: Vec<&SweepRow> = out.rows.iter().filter(|r| r.method == method && r.mu == mu).collect();
        let mut kappas: Vec<usize> = rows.iter().map(|r| r.kappa).collect();
        kappas.dedup();
        let mut betas: Vec<Option<f64>> = Vec::new();
        for r in &rows {
            if !betas.contains(&r.beta) {
                betas.push(r.beta);
            }
        }
        betas.sort_by(|a, b| a.unwrap_or(-1.0).total_cmp(&b.unwrap_or(-1.0)));
        for (name, get) in metrics {
            let file = match mu {
                Some(mu) => format!("{method}_{name}_mu{mu}.csv"),
                None => format!("{method}_{name}.csv"),
            };
            let path = dir.join(file);
            let mut f = create(&path)?;
            let header: Vec<String> = std::iter::once("kappa".to_owned())
                .chain(betas.iter().map(|b| b.map_or_else(|| name.to_owned(), |b| format!("beta={b}"))))
                .collect();
            let mut text = header.join(",");
            text.push('\n');
            for &k in &kappas {
                let cells: Vec<String> = betas
                    .iter()
                    .map(|b| fmt_opt(rows.iter().find(|r| r.kappa == k && r.beta == *b).and_then(|r| get(r))))
                    .collect();
                text.push_str(&format!("{k},{}\n", cells.join(",")));
            }
            f.write_all(text.as_bytes())
                .map_err(|source| CliError::Io { context: path.display().to_string(), source })?;
            written.push(path);
        }
    }
    Ok(written)
}
