//! Acceptance gate. Each criterion runs at its stated size and tolerance and
//! prints one PASS/FAIL/INFO line; the process exits non-zero if any gating
//! criterion fails. Criteria 10 (timing envelope) and 11 (external dataset)
//! are informational and never gate.
//!
//! Criterion 11 runs only when `SUBSEL_ISOLET_X` and `SUBSEL_ISOLET_Y` point
//! at a sample matrix (CSV) and a labels file.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use subsel::pipeline::prepare;
use subsel::settings::{Method, Settings};
use subsel::sweep::run_sweep;
use subsel_core::dataset::{load_labels, load_matrix, normalize_features, synthesize_planted, DataMatrix, LabelVector};
use subsel_core::eval::{acc, best_mapping, nmi};
use subsel_core::graph::{laplacian, lpp_similarity, GraphKind, LaplacianMatrix, SigmaPolicy, SimilarityGraph};
use subsel_core::greedy::glpsl_select;
use subsel_core::linalg::range_basis;
use subsel_core::oracle::{self, gradient_fd_oracle, PROX_ORACLE_ITERS};
use subsel_core::solver::{
    fixed_point_residual, grad_w, gloss_run, gloss_run_observed, h_normal_residual, lipschitz_w, objective,
    problem_norms, SolverConfig,
};

/// Published best-over-grid Isolet accuracy and the accepted band around it.
const ISOLET_REFERENCE_ACC: f64 = 62.45;
const ISOLET_BAND: f64 = 8.0;
const SEED: u64 = 20240601;

enum Verdict {
    Pass,
    Fail,
    Info,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn gate(ok: bool, detail: String) -> Self {
        Self { verdict: if ok { Verdict::Pass } else { Verdict::Fail }, detail }
    }

    fn info(detail: String) -> Self {
        Self { verdict: Verdict::Info, detail }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (DataMatrix, LaplacianMatrix) {
    let raw = DataMatrix::new(random_matrix(rng, n, d, -1.0, 1.0)).unwrap();
    let x = normalize_features(&raw).matrix;
    let m = 5.min(n - 1);
    let l = laplacian(&lpp_similarity(&x, m, SigmaPolicy::MedianEdge).unwrap());
    (x, l)
}

fn planted_problem(sigma: f64, seed: u64) -> (DataMatrix, SimilarityGraph, LaplacianMatrix, Vec<usize>) {
    let inst = synthesize_planted(100, 30, 5, sigma, seed).unwrap();
    let x = normalize_features(&inst.matrix).matrix;
    let g = lpp_similarity(&x, 5, SigmaPolicy::MedianEdge).unwrap();
    let l = laplacian(&g);
    (x, g, l, inst.true_features)
}

fn c1_prox() -> Outcome {
    let started = Instant::now();
    let r = oracle::verify_prox(1000, 100, PROX_ORACLE_ITERS, 1e-6, SEED);
    let secs = started.elapsed().as_secs_f64();
    Outcome::gate(
        r.passed() && secs < 60.0,
        format!(
            "{} cases, max |Δx| = {:.2e}, {} failures, {secs:.1}s (limit 60s)",
            r.case_count,
            r.max_abs_error,
            r.failures.len()
        ),
    )
}

fn c2_gradient() -> Outcome {
    let errors: Vec<f64> = (0..50u64)
        .into_par_iter()
        .map(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (case + 1) * 0x9e37);
            let n = rng.random_range(8..=20);
            let d = rng.random_range(2..=20);
            let k = rng.random_range(1..=20);
            let mu = rng.random_range(0.0..2.0);
            let (x, l) = random_problem(&mut rng, n, d);
            let w = random_matrix(&mut rng, d, k, 0.0, 1.0);
            let h = random_matrix(&mut rng, k, d, -1.0, 1.0);
            let g = grad_w(x.values(), &l.l, &w, &h, mu);
            let fd = gradient_fd_oracle(x.values(), &l.l, &w, &h, mu, 1e-6);
            (&g - &fd).norm() / fd.norm().max(f64::MIN_POSITIVE)
        })
        .collect();
    let worst = errors.iter().fold(0.0f64, |a, &b| a.max(b));
    let bad = errors.iter().filter(|&&e| !(e < 1e-5)).count();
    Outcome::gate(bad == 0, format!("50 instances, worst relative error {worst:.2e} (limit 1e-5), {bad} violations"))
}

fn c3_lipschitz() -> Outcome {
    let ratios: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (case + 1) * 0x51ed);
            let n = rng.random_range(8..=30);
            let d = rng.random_range(2..=20);
            let k = rng.random_range(1..=10);
            let mu = rng.random_range(0.0..3.0);
            let (x, l) = random_problem(&mut rng, n, d);
            let h = random_matrix(&mut rng, k, d, -2.0, 2.0);
            let w1 = random_matrix(&mut rng, d, k, 0.0, 1.0);
            let w2 = random_matrix(&mut rng, d, k, 0.0, 1.0);
            let (sx, sl) = problem_norms(x.values(), &l.l).unwrap();
            let lw = lipschitz_w(sx, sl, &h, mu).unwrap();
            let lhs = (grad_w(x.values(), &l.l, &w1, &h, mu) - grad_w(x.values(), &l.l, &w2, &h, mu)).norm();
            lhs / (lw * (&w1 - &w2).norm())
        })
        .collect();
    let worst = ratios.iter().fold(0.0f64, |a, &b| a.max(b));
    let bad = ratios.iter().filter(|&&r| !(r <= 1.0)).count();
    Outcome::gate(bad == 0, format!("100 instances, max ‖Δ∇‖/(L_w‖ΔW‖) = {worst:.3}, {bad} violations"))
}

struct DescentStats {
    steps: usize,
    zero_omega_steps: usize,
    worst_increase: f64,
    worst_decrease_gap: f64,
}

fn descent_stats(x: &DataMatrix, l: &LaplacianMatrix, cfg: &SolverConfig) -> DescentStats {
    let mut zero_omega_steps = 0;
    let mut worst_decrease_gap = f64::NEG_INFINITY;
    let res = gloss_run_observed(x, l, cfg, |r| {
        if r.omega == 0.0 {
            zero_omega_steps += 1;
            // F(W^k, H^k) − F(W^{k+1}, H^k) ≥ (L/2)‖W^{k+1} − W^k‖² − 1e-10.
            let f_mid = objective(x.values(), &l.l, r.w_new, r.h_from, cfg.mu, cfg.beta).unwrap();
            let need = 0.5 * r.l_w * (r.w_new - r.w_from).norm_squared();
            worst_decrease_gap = worst_decrease_gap.max(need - (r.f_before - f_mid));
        }
    })
    .unwrap();
    let hist = &res.state.objective_history;
    let worst_increase = hist
        .windows(2)
        .map(|p| (p[1] - p[0]) / p[0].abs().max(1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    DescentStats { steps: hist.len() - 1, zero_omega_steps, worst_increase, worst_decrease_gap }
}

fn c4_descent() -> Outcome {
    let mut jobs: Vec<(DataMatrix, LaplacianMatrix, SolverConfig)> = Vec::new();
    for case in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (case + 1) * 0x7f4a);
        let n = rng.random_range(20..=60);
        let d = rng.random_range(5..=20);
        let (x, l) = random_problem(&mut rng, n, d);
        let cfg = SolverConfig {
            k: rng.random_range(2..=8),
            kappa: 1,
            mu: rng.random_range(0.0..2.0),
            beta: 10f64.powf(rng.random_range(-2.0..1.0)),
            max_iter: 200,
            seed: case,
            ..Default::default()
        };
        jobs.push((x, l, cfg));
    }
    for seed in 0..5 {
        let (x, _, l, _) = planted_problem(0.01, seed);
        let cfg = SolverConfig { k: 10, kappa: 5, beta: 0.1, mu: 1.0, max_iter: 200, seed, ..Default::default() };
        jobs.push((x, l, cfg));
    }
    // Every problem once with extrapolation and once without, so that the
    // ω = 0 inequality is exercised on many steps.
    let stats: Vec<DescentStats> = jobs
        .par_iter()
        .flat_map(|(x, l, cfg)| {
            let plain = SolverConfig { extrapolate: false, ..cfg.clone() };
            vec![descent_stats(x, l, cfg), descent_stats(x, l, &plain)]
        })
        .collect();
    let steps: usize = stats.iter().map(|s| s.steps).sum();
    let zero: usize = stats.iter().map(|s| s.zero_omega_steps).sum();
    let inc = stats.iter().map(|s| s.worst_increase).fold(f64::NEG_INFINITY, f64::max);
    let gap = stats.iter().map(|s| s.worst_decrease_gap).fold(f64::NEG_INFINITY, f64::max);
    Outcome::gate(
        inc <= 1e-10 && gap <= 1e-10,
        format!(
            "25 problems × 2 modes, {steps} steps ({zero} with ω = 0); worst relative increase {inc:.2e}, worst sufficient-decrease shortfall {gap:.2e} (limits 1e-10)"
        ),
    )
}

struct ConvergenceRun {
    dw: f64,
    fixed_point: f64,
    w_norm: f64,
    h_residual_rel: f64,
}

fn converge(seed: u64) -> ConvergenceRun {
    let (x, _, l, _) = planted_problem(0.01, seed);
    let cfg = SolverConfig { k: 10, kappa: 5, beta: 1.0, mu: 1.0, max_iter: 500, tol: 0.0, seed, ..Default::default() };
    let res = gloss_run(&x, &l, &cfg).unwrap();
    let s = &res.state;
    ConvergenceRun {
        dw: (&s.w - &s.w_prev).norm(),
        fixed_point: fixed_point_residual(x.values(), &l.l, &s.w, &s.h, cfg.mu, cfg.beta, s.l_w),
        w_norm: s.w.norm(),
        h_residual_rel: h_normal_residual(x.values(), &s.w, &s.h) / x.values().norm(),
    }
}

fn c5_convergence(runs: &[ConvergenceRun]) -> Outcome {
    let dw = runs.iter().map(|r| r.dw).fold(0.0, f64::max);
    let fp = runs.iter().map(|r| r.fixed_point / r.w_norm.max(1.0)).fold(0.0, f64::max);
    let dw_ok = runs.iter().filter(|r| r.dw < 1e-6).count();
    let fp_ok = runs.iter().filter(|r| r.fixed_point < 1e-5 * r.w_norm.max(1.0)).count();
    Outcome::gate(
        dw_ok == runs.len() && fp_ok == runs.len(),
        format!(
            "{} planted runs (K=10, β=μ=1, 500 iterations): ‖ΔW‖ < 1e-6 on {dw_ok} (max {dw:.2e}); fixed-point residual < 1e-5 on {fp_ok} (max {fp:.2e})",
            runs.len()
        ),
    )
}

fn c6_h_optimality(runs: &[ConvergenceRun], extra: &[f64]) -> Outcome {
    let all: Vec<f64> = runs.iter().map(|r| r.h_residual_rel).chain(extra.iter().copied()).collect();
    let worst = all.iter().fold(0.0f64, |a, &b| a.max(b));
    Outcome::gate(
        all.iter().all(|&r| r < 1e-8),
        format!("{} runs, max ‖(XW)ᵀ(XWH − X)‖/‖X‖ = {worst:.2e} (limit 1e-8)", all.len()),
    )
}

fn c7_recovery(h_residuals: &mut Vec<f64>) -> Outcome {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for beta in [0.01, 0.1, 1.0] {
        let per: Vec<(usize, f64)> = seeds
            .par_iter()
            .map(|&seed| {
                let (x, _, l, truth) = planted_problem(0.01, seed);
                let cfg = SolverConfig { k: 10, kappa: 5, mu: 1.0, beta, max_iter: 500, seed, ..Default::default() };
                let res = gloss_run(&x, &l, &cfg).unwrap();
                let hits = res.ranking.selected.iter().filter(|j| truth.contains(j)).count();
                (hits, h_normal_residual(x.values(), &res.state.w, &res.state.h) / x.values().norm())
            })
            .collect();
        h_residuals.extend(per.iter().map(|p| p.1));
        let hits: Vec<usize> = per.iter().map(|p| p.0).collect();
        let total: usize = hits.iter().sum();
        if best.as_ref().is_none_or(|b| total > b.1) {
            best = Some((beta, total, hits));
        }
    }
    let (beta, total, hits) = best.unwrap();

    let greedy: Vec<(bool, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let (x, g, _, truth) = planted_problem(0.0, seed);
            let sel = glpsl_select(&x, &g, 5).unwrap();
            let q = range_basis(&x.select_columns(&sel.selected).unwrap(), 1e-12);
            let spans = truth.iter().all(|&j| {
                let c = x.values().column(j).into_owned();
                (&c - &q * (q.transpose() * &c)).norm() <= 1e-8
            });
            (spans, *sel.residual_history.last().unwrap())
        })
        .collect();
    let spans = greedy.iter().filter(|g| g.0).count();
    let worst_res = greedy.iter().map(|g| g.1).fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    Outcome::gate(
        total * 10 >= 8 * 50 && spans == 10 && worst_res < 1e-8 && secs < 120.0,
        format!(
            "GLoSS best β = {beta}: {total}/50 planted features (per instance {hits:?}, need ≥ 80%); GLPSL σ=0 spans planted set on {spans}/10, max residual {worst_res:.2e}; {secs:.1}s"
        ),
    )
}

fn c8_greedy() -> Outcome {
    let r = oracle::verify_greedy(200, 1e-10, SEED);
    let nested = oracle::verify_nested_subsets(10, 8, 1e-10, SEED);
    Outcome::gate(
        r.passed() && nested.passed(),
        format!(
            "{} greedy runs (d ≤ 8), max |residual − oracle| = {:.2e}; {} exhaustive subset lattices, max growth {:.2e}",
            r.case_count, r.max_abs_error, nested.case_count, nested.max_abs_error
        ),
    )
}

fn c9_assignment() -> Outcome {
    let a = oracle::verify_assignment(200, 7, SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut const_ok = true;
    for c in 1..=10usize {
        let truth: Vec<usize> = (0..c * 12).map(|i| i % c).collect();
        const_ok &= acc(&vec![3; truth.len()], &truth) == 1.0 / c as f64;
    }
    let mut nmi_ok = true;
    for _ in 0..100 {
        let c = rng.random_range(2..=7);
        let n = rng.random_range(c..=80);
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let mut perm: Vec<usize> = (0..c).collect();
        for i in (1..c).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let relabeled: Vec<usize> = p.iter().map(|&v| perm[v] + 10).collect();
        let distinct = {
            let mut s = p.clone();
            s.sort_unstable();
            s.dedup();
            s.len()
        };
        if distinct > 1 {
            nmi_ok &= (nmi(&p, &p) - 1.0).abs() < 1e-12;
        }
        nmi_ok &= (nmi(&p, &t) - nmi(&relabeled, &t)).abs() < 1e-12;
        nmi_ok &= best_mapping(&p, &t).matched == best_mapping(&relabeled, &t).matched;
    }
    Outcome::gate(
        a.passed() && const_ok && nmi_ok,
        format!(
            "best_mapping = oracle on {}/{} confusion matrices; constant-prediction ACC = 1/c: {const_ok}; NMI(P,P) = 1 and relabel invariance on 100 labelings: {nmi_ok}",
            a.case_count - a.failures.len(),
            a.case_count
        ),
    )
}

fn median_iteration_seconds(n: usize, d: usize, k: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (n * 31 + d) as u64);
    let x = normalize_features(&DataMatrix::new(random_matrix(&mut rng, n, d, -1.0, 1.0)).unwrap()).matrix;
    // A ring graph: the Laplacian is dense either way, and skipping the kNN
    // search keeps setup out of the measurement.
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        s[(i, (i + 1) % n)] = 1.0;
        s[((i + 1) % n, i)] = 1.0;
    }
    let l = laplacian(&SimilarityGraph { s, m: 1, kind: GraphKind::Lpp, sigma: Some(1.0) });
    let cfg = SolverConfig { k, kappa: 1, max_iter: 7, ..Default::default() };
    let mut stamps = vec![Instant::now()];
    gloss_run_observed(&x, &l, &cfg, |_| stamps.push(Instant::now())).unwrap();
    let mut per: Vec<f64> = stamps.windows(2).skip(1).map(|w| (w[1] - w[0]).as_secs_f64()).collect();
    per.sort_by(f64::total_cmp);
    per[per.len() / 2]
}

fn c10_complexity() -> Outcome {
    let base = median_iteration_seconds(1000, 500, 50);
    let double_n = median_iteration_seconds(2000, 500, 50);
    let base_d = median_iteration_seconds(1000, 500, 50);
    let double_d = median_iteration_seconds(1000, 1000, 50);
    let rn = double_n / base;
    let rd = double_d / base_d;
    let within = rn <= 4.5 && rd <= 2.5;
    Outcome::info(format!(
        "per-iteration median {:.1} ms at (1000,500,50); doubling n ×{rn:.2} (envelope 4.5), doubling d ×{rd:.2} (envelope 2.5){}",
        base * 1e3,
        if within { "" } else { " — outside envelope (timing is machine-dependent)" }
    ))
}

fn c11_isolet() -> Outcome {
    let (Ok(xp), Ok(yp)) = (std::env::var("SUBSEL_ISOLET_X"), std::env::var("SUBSEL_ISOLET_Y")) else {
        return Outcome::info("skipped: set SUBSEL_ISOLET_X and SUBSEL_ISOLET_Y to run the full grid".into());
    };
    let run = || -> Result<String, String> {
        let raw = load_matrix(&xp, false).map_err(|e| e.to_string())?;
        let labels: LabelVector = load_labels(&yp).map_err(|e| e.to_string())?;
        let settings = Settings { methods: vec![Method::Gloss], ..Settings::default() };
        let prep = prepare(raw, "isolet".into(), &settings).map_err(|e| e.to_string())?;
        let out = run_sweep(&prep, &labels, &settings).map_err(|e| e.to_string())?;
        let best = out
            .rows
            .iter()
            .filter_map(|r| r.acc_mean.map(|a| (a, r.kappa, r.beta)))
            .fold((f64::NEG_INFINITY, 0, None), |b, r| if r.0 > b.0 { r } else { b });
        let acc = 100.0 * best.0;
        Ok(format!(
            "best-over-grid GLoSS ACC {acc:.2} at κ={} β={:?}; reference {ISOLET_REFERENCE_ACC} ± {ISOLET_BAND} → {}",
            best.1,
            best.2,
            if (acc - ISOLET_REFERENCE_ACC).abs() <= ISOLET_BAND { "within" } else { "outside" }
        ))
    };
    Outcome::info(run().unwrap_or_else(|e| format!("could not run: {e}")))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "prox correctness", c1_prox()));
    results.push((2, "gradient fidelity", c2_gradient()));
    results.push((3, "Lipschitz bound", c3_lipschitz()));
    results.push((4, "monotone descent", c4_descent()));
    let runs: Vec<ConvergenceRun> = (0..10).into_par_iter().map(converge).collect();
    results.push((5, "convergence behavior", c5_convergence(&runs)));
    let mut extra_h = Vec::new();
    let c7 = c7_recovery(&mut extra_h);
    results.push((6, "H optimality", c6_h_optimality(&runs, &extra_h)));
    results.push((7, "planted recovery", c7));
    results.push((8, "greedy vs oracle", c8_greedy()));
    results.push((9, "assignment/metrics", c9_assignment()));
    results.push((10, "complexity envelope", c10_complexity()));
    results.push((11, "reference-table reproduction", c11_isolet()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Info => "INFO",
        };
        println!("{tag} {id:>2} {name}: {}", o.detail);
    }
    println!(
        "acceptance: {} gating criteria, {failed} failed ({:.1}s)",
        results.iter().filter(|r| !matches!(r.2.verdict, Verdict::Info)).count(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
