//! End-to-end tests of the `diffgeo` binary: artifact contents, exit codes,
//! and cache behavior.

use assert_cmd::Command;
use predicates::prelude::*;

const CIRCLE_SPEC: &str = r#"{"shape":"circle","n":100,"radius":1.0,"seed":3}"#;

fn diffgeo() -> Command {
    Command::cargo_bin("diffgeo").unwrap()
}

#[test]
fn basis_reports_eigenvalues_from_shape_spec() {
    let dir = tempfile::tempdir().unwrap();
    diffgeo()
        .args(["basis", "--shape-spec", CIRCLE_SPEC, "--n0", "9", "--n1", "4", "--n2", "4"])
        .args(["--out", dir.path().to_str().unwrap()])
        .assert()
        .success();
    let body = std::fs::read_to_string(dir.path().join("basis.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(report["schema_version"], 1);
    let eigs = report["eigenvalues"].as_array().unwrap();
    assert_eq!(eigs.len(), 9);
    assert_eq!(eigs[0].as_f64().unwrap(), 0.0);
}

#[test]
fn invalid_flag_exits_one_with_usage() {
    diffgeo()
        .args(["basis", "--bogus-flag"])
        .assert()
        .code(1)
        .stderr(predicate::str::contains("Usage"));
}

#[test]
fn missing_input_exits_one() {
    diffgeo()
        .arg("basis")
        .assert()
        .code(1)
        .stderr(predicate::str::contains("--input or --shape-spec"));
}

#[test]
fn shape_spec_with_unknown_key_exits_one() {
    let spec = r#"{"shape":"circle","n":100,"radius":1.0,"seed":3,"junk":1}"#;
    diffgeo().args(["basis", "--shape-spec", spec, "--n0", "9"]).assert().code(1);
}

#[test]
fn cache_reproduces_bytes_and_reports_hits() {
    let cache = tempfile::tempdir().unwrap();
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    let args = |out: &std::path::Path| {
        vec![
            "basis".to_string(),
            "--shape-spec".into(),
            CIRCLE_SPEC.into(),
            "--n0".into(),
            "9".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    diffgeo()
        .env("DIFFGEO_CACHE_DIR", cache.path())
        .args(args(out1.path()))
        .assert()
        .success()
        .stderr(predicate::str::contains("cache hit").not());
    diffgeo()
        .env("DIFFGEO_CACHE_DIR", cache.path())
        .args(args(out2.path()))
        .assert()
        .success()
        .stderr(predicate::str::contains("cache hit"));
    let a = std::fs::read(out1.path().join("basis.json")).unwrap();
    let b = std::fs::read(out2.path().join("basis.json")).unwrap();
    assert_eq!(a, b, "cached rerun must byte-reproduce the artifact");
}

#[test]
fn synth_writes_csv_usable_as_input() {
    let dir = tempfile::tempdir().unwrap();
    diffgeo()
        .args(["synth", "--shape-spec", CIRCLE_SPEC, "--seed", "8"])
        .args(["--out", dir.path().to_str().unwrap()])
        .assert()
        .success();
    let csv = dir.path().join("points.csv");
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(rows, 100);
    diffgeo()
        .args(["basis", "--input", csv.to_str().unwrap(), "--n0", "9"])
        .args(["--out", dir.path().to_str().unwrap()])
        .assert()
        .success();
}

#[test]
fn hodge_on_circle_reports_betti_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"shape":"circle","n":300,"radius":1.0,"seed":11}"#;
    diffgeo()
        .args(["hodge", "--shape-spec", spec, "--n0", "24", "--n1", "5", "--n2", "4"])
        .args(["--degree", "1", "--out", dir.path().to_str().unwrap()])
        .assert()
        .success();
    let body = std::fs::read_to_string(dir.path().join("hodge.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(report["betti"], 1);
}

#[test]
fn features_eigenvalue_only_vector() {
    let dir = tempfile::tempdir().unwrap();
    diffgeo()
        .args(["features", "--shape-spec", CIRCLE_SPEC, "--n0", "10", "--n1", "4", "--n2", "4"])
        .args(["--f0", "4", "--f1", "0", "--dirichlet", "0"])
        .args(["--heat-times0", "1", "--heat-times1", ""])
        .args(["--out", dir.path().to_str().unwrap()])
        .assert()
        .success();
    let body = std::fs::read_to_string(dir.path().join("features.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(report["values"].as_array().unwrap().len(), 8);
    assert_eq!(report["names"].as_array().unwrap().len(), 8);
}

#[test]
fn bench_single_size_has_nonzero_times() {
    let dir = tempfile::tempdir().unwrap();
    diffgeo()
        .args(["bench", "--sizes", "100", "--reps", "1"])
        .args(["--n0", "12", "--n1", "5", "--n2", "4"])
        .args(["--out", dir.path().to_str().unwrap()])
        .assert()
        .success();
    let body = std::fs::read_to_string(dir.path().join("bench.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&body).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    for stage in rows[0]["stages"].as_array().unwrap() {
        assert!(stage["mean_seconds"].as_f64().unwrap() > 0.0);
    }
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(csv.starts_with("n,stage,mean_seconds,std_seconds"));
}

#[test]
fn bench_rejects_unsorted_sizes() {
    diffgeo()
        .args(["bench", "--sizes", "200,100", "--reps", "1"])
        .assert()
        .code(1)
        .stderr(predicate::str::contains("ascending"));
}
