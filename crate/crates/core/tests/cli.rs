use std::path::Path;
use std::process::{Command, Output};

use rilqr::ExperimentConfig;

fn rilqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rilqr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config_path(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .display()
        .to_string()
}

fn only_run_dir(root: &Path) -> std::path::PathBuf {
    let dirs: Vec<_> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

#[test]
fn shipped_config_is_the_default() {
    let cfg = ExperimentConfig::load(config_path("table2.toml")).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    ExperimentConfig::load(config_path("smoke.toml")).unwrap();
}

#[test]
fn table2_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let smoke = config_path("smoke.toml");
    for dir in [&a, &b] {
        let out = rilqr(&["table2", "--config", &smoke, "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.code().is_some_and(|c| c == 0 || c == 2), "{out:?}");
    }
    let (ra, rb) = (only_run_dir(a.path()), only_run_dir(b.path()));
    assert_eq!(ra.file_name(), rb.file_name());
    let mut files = vec!["table2.csv".to_string(), "replicas.csv".to_string()];
    for e in std::fs::read_dir(ra.join("trajectories")).unwrap() {
        files.push(format!("trajectories/{}", e.unwrap().file_name().to_string_lossy()));
    }
    assert!(files.len() > 2);
    for file in &files {
        let x = std::fs::read_to_string(ra.join(file)).unwrap();
        let y = std::fs::read_to_string(rb.join(file)).unwrap();
        assert!(x == y, "{file} differs");
    }
    assert!(ra.join("trajectories").join("case1_rilqr.csv").exists());
    let table = std::fs::read_to_string(ra.join("table2.csv")).unwrap();
    assert!(table.starts_with("case,explore_variance,snr,j_explore,j_exploit,j_mlqr,j_rilqr"));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn generate_similar_writes_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = rilqr(&[
        "generate-similar",
        "--set",
        "record_length=500",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let rec = rilqr::SignalRecord::read_csv_file(dir.path().join("similar_record.csv")).unwrap();
    assert_eq!(rec.len(), 500);
    assert_eq!((rec.input_dim(), rec.output_dim()), (1, 2));
}

#[test]
fn run_rilqr_uses_one_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = rilqr(&[
        "run-rilqr",
        "--seeds",
        "2",
        "--set",
        "record_length=3000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let table = std::fs::read_to_string(only_run_dir(dir.path()).join("table2.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn failed_replica_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = rilqr(&[
        "run-mlqr",
        "--seeds",
        "1",
        "--set",
        "explore_variances=[0.0]",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn bad_override_is_an_error() {
    let out = rilqr(&["table2", "--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn bench_reports_exponent() {
    let out = rilqr(&["bench-qr-update", "--sizes", "10,20", "--updates", "50"]);
    assert!(out.status.success(), "{out:?}");
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["points"].as_array().unwrap().len(), 2);
    assert!(rep["exponent"].as_f64().unwrap().is_finite());
}
