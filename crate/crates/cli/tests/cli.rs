use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn epmac(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epmac"))
        .args(args)
        .env("EPMAC_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_three_snapshots_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epmac(&["run", "--case", "qn1d", "--scheme", "ap"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("qn1d-ap");
    for i in 0..3 {
        assert!(dir.join(format!("snapshot_{i:04}.csv")).exists());
    }
    assert!(!dir.join("snapshot_0003.csv").exists());
    assert!(dir.join("reports.csv").exists());
    let m = manifest(&dir);
    assert_eq!(m["scheme"], "ap");
    assert_eq!(m["final_time"], 0.1);
    assert_eq!(m["ok"], true);
    assert!(m["provenance"].as_str().unwrap().starts_with("epmac "));
}

#[test]
fn classical_reference_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cl");
    let out = epmac(
        &[
            "run", "--case", "qn1d", "--scheme", "classical", "--dt-eps-factor", "0.5", "--t-end", "0.005",
            "--out", dir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir);
    assert_eq!(m["scheme"], "classical");
    assert_eq!(m["steps"], 100);
}

#[test]
fn usage_errors_exit_with_two_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epmac(&["run", "--case", "nope"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);

    let out = epmac(&["sweep", "--eps-list", "1e-2"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = epmac(&["run", "--scheme", "implicit"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = epmac(&["run", "--bogus-flag"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_one_and_records_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fail");
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"case": "qn1d", "max_steps": 3}"#).unwrap();
    let out = epmac(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(&dir);
    assert_eq!(m["error"]["kind"], "step_limit");
    assert_eq!(m["steps"], 3);
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"case": "qn1d", "cells": 40, "t_end": 0.003, "ap": {"eta": 3.0}}"#).unwrap();
    let dir = tmp.path().join("o");
    let out = epmac(
        &["run", "--config", cfg.to_str().unwrap(), "--cells", "20", "--out", dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir);
    assert_eq!(m["config"]["cells"], 20);
    assert_eq!(m["config"]["ap"]["eta"], 3.0);
    assert_eq!(m["mesh"]["num_cells"], 20);
}

#[test]
fn identical_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let out = epmac(
            &["run", "--case", "column2d", "--cells", "16", "--out", dir.to_str().unwrap()],
            tmp.path(),
        );
        assert!(out.status.success());
        dir
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["snapshot_0000.csv", "snapshot_0001.csv", "snapshot_0002.csv", "reports.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let header = fs::read_to_string(a.join("snapshot_0001.csv")).unwrap();
    assert_eq!(header.lines().next(), Some("x,y,rho,u,v,phi,div_u"));
}

#[test]
fn sweep_table_has_one_row_per_eps() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sw");
    let out = epmac(
        &["sweep", "--case", "qn1d", "--eps-list", "1e-1,1e-4", "--workers", "2", "--out", dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("eps,scheme,steps,dt_min,dt_max"));
    assert!(dir.join("eps_1e-1").join("manifest.json").exists());
}

#[test]
fn verify_passes_and_detects_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epmac(&["verify", "--seed", "7", "--seeds", "2"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 12);

    let out = epmac(&["verify", "--corrupt-duality"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL seed="));
}

#[test]
fn compare_reports_norms() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cmp");
    let out = epmac(
        &[
            "compare", "--case", "qn2d", "--cells", "16", "--eps", "1e-3", "--schemes", "ap,limit", "--t-end", "0.05",
            "--out", dir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.join("compare.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("field,l1,l2,linf"));
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn dump_matrix_writes_coordinate_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("dm");
    let out = epmac(
        &["run", "--cells", "10", "--t-end", "0.001", "--dump-matrix", "--out", dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success());
    let text = fs::read_to_string(dir.join("matrix.txt")).unwrap();
    // Periodic 1D: three entries per row.
    assert_eq!(text.lines().count(), 30);
}
