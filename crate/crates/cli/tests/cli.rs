//! End-to-end runs of the `uno` binary.

use std::process::{Command, Output};

fn uno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uno")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn plan_rate_prints_the_plan() {
    let o =
        uno(&["plan-rate", "--beta-x", "4", "--lambda", "1", "--e-inf", "0.05", "--omega-max", "100", "--zeta", "2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["h"], 2);
}

#[test]
fn plan_rate_rejects_a_small_threshold() {
    let o = uno(&["plan-rate", "--beta-x", "4", "--lambda", "0.1", "--e-inf", "0.05", "--omega-max", "100"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn check_passes() {
    let o = uno(&["check"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn run_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": "table1", "lambdas": [1.0], "ms": [10], "signal": {"oversample": 1}, "solver": {"sweeps": 3}}"#,
    )
    .unwrap();
    let csv = dir.path().join("r.csv");
    let o = uno(&[
        "run",
        "table1",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "2",
        "--seed",
        "5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("uno"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# uno "));
    assert!(text.contains("\"seed\":5"));
    assert_eq!(text.lines().filter(|l| l.starts_with("trial,")).count(), 2);

    let json = dir.path().join("r.json");
    let o =
        uno(&["run", "table1", "--config", cfg.to_str().unwrap(), "--trials", "1", "--out", json.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["cells"][0]["trials"].as_array().unwrap().len(), 1);
}

#[test]
fn run_rejects_unknown_experiment_and_mismatched_config() {
    assert!(!uno(&["run", "table9"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"experiment": "table2"}"#).unwrap();
    assert!(!uno(&["run", "table1", "--config", cfg.to_str().unwrap()]).status.success());
}
