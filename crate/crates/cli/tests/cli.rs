use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subsel::record::RunRecord;
use tempfile::TempDir;

fn subsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subsel")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    x: PathBuf,
    y: PathBuf,
}

/// Three well-separated classes carried by five planted columns.
fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let x = dir.path().join("planted.csv");
    let y = dir.path().join("labels.txt");
    let out = subsel(&[
        "synth", "--n", "60", "--d", "15", "--kappa", "5", "--classes", "3", "--separation", "40",
        "--sigma", "0.001", "--seed", "4", "--output", p(&x), "--labels-out", p(&y),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Fixture { dir, x, y }
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn csv_rows(text: &[u8]) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text);
    r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect()
}

#[test]
fn select_emits_ranking_with_defaults_in_metadata() {
    let f = fixture();
    let out = subsel(&["select", "--input", p(&f.x), "--kappa", "4", "--beta", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: RunRecord = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec.selected.len(), 4);
    assert_eq!((rec.config.solver.k, rec.config.solver.m, rec.config.solver.max_iter), (100, 5, 30));
    assert_eq!(rec.metadata.iterations, Some(30));
    assert!(rec.metadata.normalized_before_graph);
    assert!(rec.metadata.sigma.unwrap() > 0.0);
    assert_eq!(rec.metadata.objective_history.len(), 31);

    // The record survives a JSON round trip unchanged.
    let again: RunRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
    assert_eq!(again, rec);
}

#[test]
fn greedy_select_reports_residuals() {
    let f = fixture();
    let out = subsel(&["select", "--input", p(&f.x), "--method", "glpsl", "--kappa", "5"]);
    assert!(out.status.success());
    let rec: RunRecord = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec.metadata.residual_history.len(), 5);
    assert!(rec.metadata.residual_history.windows(2).all(|w| w[1] <= w[0] + 1e-10));
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let f = fixture();
    let zero = subsel(&["select", "--input", p(&f.x), "--kappa", "0"]);
    assert_eq!(zero.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&zero.stderr).contains("--kappa"));

    let too_many = subsel(&["select", "--input", p(&f.x), "--kappa", "16"]);
    assert_eq!(too_many.status.code(), Some(1));

    let missing = subsel(&["select", "--input", p(&f.dir.path().join("absent.csv"))]);
    assert_eq!(missing.status.code(), Some(1));

    let bad_config = f.dir.path().join("bad.json");
    std::fs::write(&bad_config, "{\"beta\": ").unwrap();
    let out = subsel(&["--config", p(&bad_config), "select", "--input", p(&f.x)]);
    assert_eq!(out.status.code(), Some(2));

    let bad_delta = subsel(&["select", "--input", p(&f.x), "--delta-omega", "1.5"]);
    assert_eq!(bad_delta.status.code(), Some(2));
}

#[test]
fn config_precedence_is_flags_then_file_then_defaults() {
    let f = fixture();
    let cfg = f.dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"solver": {"beta": 7.0, "mu": 2.0}, "runs": 4}"#).unwrap();
    let out = subsel(&["--config", p(&cfg), "--show-config", "eval", "--input", "x", "--labels", "y", "--mu", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["solver"]["beta"], 7.0);
    assert_eq!(v["solver"]["mu"], 3.0);
    assert_eq!(v["solver"]["K"], 100);
    assert_eq!(v["runs"], 4);

    let defaults = subsel(&["--show-config"]);
    let v: serde_json::Value = serde_json::from_slice(&defaults.stdout).unwrap();
    assert_eq!(v["runs"], 20);
    assert_eq!(v["beta_grid"], serde_json::json!([0.01, 0.1, 1.0, 10.0, 40.0, 70.0, 100.0]));
}

#[test]
fn eval_with_baselines_on_separable_data() {
    let f = fixture();
    let out = subsel(&[
        "eval", "--input", p(&f.x), "--labels", p(&f.y), "--method", "glpsl", "--kappa", "5", "--runs", "5",
        "--baseline", "both",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.starts_with("method,dataset,kappa,beta,mu,K,m,acc_mean,acc_std,nmi_mean,nmi_std,seconds\n"));
    let rows = csv_rows(&out.stdout);
    let methods: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["glpsl", "all_features", "random"]);
    assert_eq!(rows[0][7].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[1][2], "15");
}

#[test]
fn eval_reads_a_saved_ranking() {
    let f = fixture();
    let ranking = f.dir.path().join("r.json");
    let out = subsel(&["select", "--input", p(&f.x), "--kappa", "6", "--beta", "0.1", "--output", p(&ranking)]);
    assert!(out.status.success());
    let out = subsel(&[
        "eval", "--input", p(&f.x), "--labels", p(&f.y), "--ranking", p(&ranking), "--kappa", "3", "--runs", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&out.stdout);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][..3], ["gloss", "planted", "3"]);
    assert_eq!((num(&rows[0][3]), num(&rows[0][4])), (0.1, 1.0));
}

#[test]
fn eval_rejects_label_length_mismatch() {
    let f = fixture();
    let short = f.dir.path().join("short.txt");
    std::fs::write(&short, "0\n1\n2\n").unwrap();
    let out = subsel(&["eval", "--input", p(&f.x), "--labels", p(&short), "--method", "glpsl", "--kappa", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_grid_is_complete_sorted_and_reproducible() {
    let f = fixture();
    let run = |dir: &Path, jobs: &str| {
        let out = subsel(&[
            "sweep", "--input", p(&f.x), "--labels", p(&f.y), "--out-dir", p(dir), "--kappa-grid", "6,3",
            "--beta-grid", "1,0.1", "--methods", "gloss", "--runs", "3", "--jobs", jobs,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.join("results.csv")).unwrap()
    };
    let a = run(&f.dir.path().join("a"), "1");
    let b = run(&f.dir.path().join("b"), "4");
    assert_eq!(a, b);
    let rows = csv_rows(&a);
    assert_eq!(rows.len(), 4);
    let keys: Vec<(&str, f64)> = rows.iter().map(|r| (r[2].as_str(), num(&r[3]))).collect();
    assert_eq!(keys, [("3", 0.1), ("3", 1.0), ("6", 0.1), ("6", 1.0)]);
    assert!(rows.iter().all(|r| r[9] == "ok"));

    let matrix = std::fs::read_to_string(f.dir.path().join("a/gloss_acc_mean_mu1.csv")).unwrap();
    let lines: Vec<&str> = matrix.lines().collect();
    assert_eq!(lines[0], "kappa,beta=0.1,beta=1");
    assert_eq!(lines.len(), 3);
}

#[test]
fn sweep_records_failed_cells() {
    let f = fixture();
    let dir = f.dir.path().join("s");
    let out = subsel(&[
        "sweep", "--input", p(&f.x), "--labels", p(&f.y), "--out-dir", p(&dir), "--kappa-grid", "5,99",
        "--beta-grid", "1", "--methods", "glpsl", "--runs", "2",
    ]);
    assert!(out.status.success());
    let rows = csv_rows(&std::fs::read(dir.join("results.csv")).unwrap());
    assert_eq!(rows[0][9], "ok");
    assert!(rows[1][9].starts_with("error"));

    let all_bad = subsel(&[
        "sweep", "--input", p(&f.x), "--labels", p(&f.y), "--out-dir", p(&dir), "--kappa-grid", "99",
        "--methods", "glpsl",
    ]);
    assert_eq!(all_bad.status.code(), Some(1));
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let gen = |name: &str| {
        let path = dir.path().join(name);
        let truth = dir.path().join(format!("{name}.json"));
        let out = subsel(&["synth", "--seed", "9", "--output", p(&path), "--truth-out", p(&truth)]);
        assert!(out.status.success());
        (std::fs::read(path).unwrap(), std::fs::read_to_string(truth).unwrap())
    };
    let (a, ta) = gen("a.csv");
    let (b, tb) = gen("b.csv");
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 100);
}

#[test]
fn verify_quick_passes() {
    let out = subsel(&["verify", "--quick", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let reports: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports.len(), 7);
    assert!(reports.iter().all(|r| r["failures"].as_array().unwrap().is_empty()));
}
