//! Smoke tests for the `gridsense` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_gridsense");

fn tiny_network_json() -> &'static str {
    r#"{
        "buses": [
            {"id": 1, "phases": 1}, {"id": 2, "phases": 1},
            {"id": 3, "phases": 1}, {"id": 4, "phases": 1}
        ],
        "lines": [
            {"id": 1, "from": 1, "to": 2, "y_series": [4.0, -8.0],
             "y_shunt_from": [0.0, 0.1], "y_shunt_to": [0.0, 0.1]},
            {"id": 2, "from": 2, "to": 3, "y_series": [4.0, -8.0],
             "y_shunt_from": [0.0, 0.1], "y_shunt_to": [0.0, 0.1]},
            {"id": 3, "from": 2, "to": 4, "y_series": [4.0, -8.0],
             "y_shunt_from": [0.0, 0.1], "y_shunt_to": [0.0, 0.1]}
        ],
        "current_meters": [
            {"line": 1, "direction": "from_to"},
            {"line": 2, "direction": "from_to"},
            {"line": 3, "direction": "from_to"}
        ],
        "pmu_buses": [1, 3],
        "side_chains": [[3], [2]]
    }"#
}

fn write_tiny_scenario(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("net.json"), tiny_network_json()).unwrap();
    let scenario = r#"{
        "network": "net.json",
        "prior": {"magnitude_mean": 1.0, "phase_mean": 0.0, "variance": 0.01},
        "noise_variance": 0.005,
        "profile": {"mode": "k_ladder", "k": 1, "bits": 2, "full_scale": "auto"},
        "trials": 4,
        "seed": 7
    }"#;
    let path = dir.join("scenario.json");
    std::fs::write(&path, scenario).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn validate_reports_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("net.json"), tiny_network_json()).unwrap();
    let out = run(&["validate", dir.path().join("net.json").to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("5 x 4"), "unexpected output: {text}");
}

#[test]
fn validate_rejects_bad_network() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = run(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_emits_csv_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_tiny_scenario(dir.path());
    let args = ["run", scenario.to_str().unwrap(), "--format", "csv"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success() && b.status.success());

    let text_a = stdout(&a);
    let lines_a: Vec<&str> = text_a.lines().collect();
    assert_eq!(
        lines_a[0],
        "estimator, trials, mse, mse_magn, mse_phase, secs_per_trial, \
         nu_x_re, nu_x_im, sigma_x2, bits_total, bits_saved_pct, seed"
    );
    assert_eq!(lines_a.len(), 3, "one row per estimator: {text_a}");
    assert!(lines_a[1].starts_with("emswgamp,"));
    assert!(lines_a[2].starts_with("lmmse,"));

    // Identical up to the wall-clock column.
    let text_b = stdout(&b);
    for (la, lb) in text_a.lines().zip(text_b.lines()) {
        let fa: Vec<&str> = la.split(", ").collect();
        let fb: Vec<&str> = lb.split(", ").collect();
        assert_eq!(fa.len(), fb.len());
        for (i, (va, vb)) in fa.iter().zip(&fb).enumerate() {
            if i != 5 {
                assert_eq!(va, vb, "column {i} differs");
            }
        }
    }
}

#[test]
fn run_writes_json_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_tiny_scenario(dir.path());
    let report = dir.path().join("report.json");
    let out = run(&[
        "run",
        scenario.to_str().unwrap(),
        "--format",
        "json",
        "--output",
        report.to_str().unwrap(),
        "--estimators",
        "emswgamp",
    ]);
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["trials"], 4);
    assert_eq!(parsed["estimators"][0]["estimator"], "emswgamp");
}

#[test]
fn sweep_emits_one_section_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_tiny_scenario(dir.path());
    let out = run(&[
        "sweep",
        scenario.to_str().unwrap(),
        "--k",
        "0,1,2",
        "--format",
        "csv",
        "--estimators",
        "emswgamp",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("emswgamp,")).collect();
    assert_eq!(rows.len(), 3, "expected one row per ladder point: {text}");
    // An unreachable ladder point is a hard error.
    let out = run(&["sweep", scenario.to_str().unwrap(), "--k", "3"]);
    assert_eq!(out.status.code(), Some(1));
}
