use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use volsample::cli::dataset::{to_csv, to_libsvm};
use volsample::fixtures;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_volsample"));
    c.env_remove("VOLSAMPLE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_code(o: &Output) -> String {
    let stderr = String::from_utf8(o.stderr.clone()).unwrap();
    let line = stderr.lines().last().unwrap_or_default();
    let v: Value = serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr not JSON: {stderr}"));
    v["error"]["code"].as_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: TempDir::new().unwrap() }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn gaussian_csv(&self, n: usize, d: usize) -> PathBuf {
        let p = fixtures::gaussian_fixture(n, d, 5).problem().unwrap();
        self.file("data.csv", &to_csv(&p))
    }
}

#[test]
fn sample_full_size_prints_every_index() {
    let ws = Workspace::new();
    let input = ws.gaussian_csv(8, 2);
    let o = run(&["sample", "--input", input.to_str().unwrap(), "--size", "8"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0 1 2 3 4 5 6 7");
}

#[test]
fn same_seed_gives_identical_output_and_report() {
    let ws = Workspace::new();
    let input = ws.gaussian_csv(40, 3);
    let report = ws.path("run.json");
    for alg in ["regvol", "fastregvol", "leverage", "oracle"] {
        let size = if alg == "oracle" { "3" } else { "6" };
        let input = if alg == "oracle" { ws.gaussian_csv(8, 3) } else { input.clone() };
        let args = [
            "sample", "--input", input.to_str().unwrap(), "--size", size, "--algorithm", alg,
            "--seed", "11", "--json", report.to_str().unwrap(),
        ];
        let a = run(&args);
        let first = std::fs::read(&report).unwrap();
        let b = run(&args);
        let second = std::fs::read(&report).unwrap();
        assert!(a.status.success(), "{alg}");
        assert_eq!(a.stdout, b.stdout, "{alg}");
        assert_eq!(first, second, "{alg}");
        let v = read_json(&report);
        assert_eq!(v["seed"], 11);
        assert_eq!(v["result"]["algorithm"], alg);
        assert!(v.get("timings_ms").is_none());
    }
}

#[test]
fn seed_defaults_from_environment() {
    let ws = Workspace::new();
    let input = ws.gaussian_csv(30, 2);
    let args = ["sample", "--input", input.to_str().unwrap(), "--size", "4"];
    let from_env = bin().args(args).env("VOLSAMPLE_SEED", "123").output().unwrap();
    let explicit = run(&[&args[..], &["--seed", "123"]].concat());
    assert_eq!(from_env.stdout, explicit.stdout);
    let outcomes: std::collections::HashSet<Vec<u8>> = (0..20)
        .map(|k| bin().args(args).env("VOLSAMPLE_SEED", k.to_string()).output().unwrap().stdout)
        .collect();
    assert!(outcomes.len() > 1);
}

#[test]
fn timings_are_opt_in() {
    let ws = Workspace::new();
    let input = ws.gaussian_csv(30, 2);
    let report = ws.path("t.json");
    let o = run(&[
        "sample", "--input", input.to_str().unwrap(), "--size", "4", "--timings", "--json",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(read_json(&report)["timings_ms"]["sample"].is_number());
}

#[test]
fn invalid_configurations_are_reported() {
    let ws = Workspace::new();
    let input = ws.gaussian_csv(10, 3);
    let path = input.to_str().unwrap();
    let cases: [&[&str]; 4] = [
        &["sample", "--input", path, "--size", "2"],
        &["sample", "--input", path, "--size", "11"],
        &["sample", "--input", path, "--size", "3", "--lambda", "-1"],
        &["regress", "--input", path, "--size", "3", "--replicates", "0"],
    ];
    for args in cases {
        let o = run(args);
        assert!(!o.status.success(), "{args:?}");
        assert_eq!(error_code(&o), "InvalidConfig", "{args:?}");
        assert!(o.stdout.is_empty());
    }
    let o = run(&["bench", "--algorithm", "oracle", "--sizes", "100"]);
    assert_eq!(error_code(&o), "InvalidConfig");
    let o = run(&["sample", "--size"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "InvalidConfig");
}

#[test]
fn input_errors_are_reported() {
    let ws = Workspace::new();
    let bad = ws.file("bad.csv", "1,2,3\n4,oops,6\n");
    let o = run(&["sample", "--input", bad.to_str().unwrap(), "--size", "1"]);
    assert_eq!(error_code(&o), "ParseError");
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let empty = ws.file("empty.csv", "");
    let o = run(&["sample", "--input", empty.to_str().unwrap(), "--size", "1"]);
    assert_eq!(error_code(&o), "ParseError");

    let o = run(&["sample", "--input", ws.path("missing.csv").to_str().unwrap(), "--size", "1"]);
    assert_eq!(error_code(&o), "IoError");

    let wide = ws.file("wide.svm", "1 1:1 4:2\n");
    let o = run(&[
        "sample", "--input", wide.to_str().unwrap(), "--format", "libsvm", "--features", "3", "--size", "1",
    ]);
    assert_eq!(error_code(&o), "DimensionMismatch");
}

#[test]
fn libsvm_and_csv_inputs_agree() {
    let ws = Workspace::new();
    let p = fixtures::gaussian_fixture(25, 3, 9).problem().unwrap();
    let csv = ws.file("d.csv", &to_csv(&p));
    let svm = ws.file("d.svm", &to_libsvm(&p));
    let a = run(&["sample", "--input", csv.to_str().unwrap(), "--size", "5", "--seed", "4"]);
    let b = run(&[
        "sample", "--input", svm.to_str().unwrap(), "--format", "libsvm", "--features", "3", "--size", "5",
        "--seed", "4",
    ]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn regress_oracle_on_degenerate_data() {
    let ws = Workspace::new();
    let input = ws.file("deg.csv", "x1,x2,y\n1,1,1\n1,1,0\n1,0,0\n");
    let report = ws.path("r.json");
    let o = run(&[
        "regress", "--input", input.to_str().unwrap(), "--size", "2", "--algorithm", "oracle,regvol",
        "--replicates", "50", "--json", report.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v = read_json(&report);
    let runs = v["result"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert!((runs[0]["exact_mean_total_loss"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((runs[0]["full_data_total_loss"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((runs[1]["mean_total_loss"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn regress_lambda_grid_and_averaging() {
    let ws = Workspace::new();
    let input = ws.gaussian_csv(30, 3);
    let report = ws.path("g.json");
    let o = run(&[
        "regress", "--input", input.to_str().unwrap(), "--size", "5", "--lambda-grid", "0.1,1",
        "--replicates", "20", "--average", "--json", report.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let runs = read_json(&report)["result"]["runs"].as_array().unwrap().clone();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["lambda"], 0.1);
    assert_eq!(runs[1]["lambda"], 1.0);
    assert!(runs.iter().all(|r| r["averaged"] == true));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn verify_exact_suites_pass() {
    let ws = Workspace::new();
    for suite in ["identities", "regression-bounds"] {
        let report = ws.path(&format!("{suite}.json"));
        let o = run(&["verify", "--suite", suite, "--json", report.to_str().unwrap()]);
        assert!(o.status.success(), "{suite}: {}", stdout(&o));
        let v = read_json(&report);
        assert_eq!(v["result"]["passed"], true);
        assert!(!v["result"]["reports"].as_array().unwrap().is_empty());
        assert!(!stdout(&o).contains("FAIL"));
    }
}

#[test]
fn verify_distribution_suite_passes() {
    let o = run(&["verify", "--suite", "distribution", "--draws", "50000", "--seed", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn bench_reports_slopes() {
    let ws = Workspace::new();
    let report = ws.path("b.json");
    let o = run(&["bench", "--sizes", "200,400", "--d", "3", "--json", report.to_str().unwrap()]);
    assert!(o.status.success());
    let v = read_json(&report);
    let series = v["result"]["series"].as_array().unwrap();
    assert_eq!(series.len(), 2);
    assert!(series.iter().all(|s| s["log_log_slope"].is_number()));
    assert_eq!(v["result"]["ratio_regvol_over_fast"].as_array().unwrap().len(), 2);
}
