//! The `ksumlab` binary end to end: output files, exit codes and replays.

use std::process::Command;

use serde_json::Value;

fn ksumlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ksumlab")).args(args).output().expect("binary runs")
}

#[test]
fn kl_prints_exact_and_numeric_values() {
    let out = ksumlab(&["kl", "--a", "1", "--q", "7", "--exact"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["q"], 7);
    assert!(v["im"].as_f64().unwrap().abs() < 1e-12);
    assert!(v.get("exact").is_some());
}

#[test]
fn verify_writes_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..2).map(|i| dir.path().join(format!("r{i}.json"))).collect();
    for p in &paths {
        let out = ksumlab(&["--seed", "5", "--out", p.to_str().unwrap(), "verify", "--suite", "variety", "--max-p", "23"]);
        assert!(out.stdout.is_empty());
        assert!(p.exists());
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["params"]["seed"], 5);
}

#[test]
fn failures_replay_to_the_same_verdict() {
    let out = ksumlab(&["--exact", "verify", "--suite", "kloosterman2power", "--max-q", "50", "--max-s", "7"]);
    assert_eq!(out.status.code(), Some(1), "s = 7 disagrees with the closed form");
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let failures = v["failures"].as_array().unwrap();
    assert!(!failures.is_empty());
    for f in failures.iter().take(5) {
        let id = f["input"].as_str().unwrap();
        assert_eq!(f["replay"].as_str().unwrap(), format!("ksumlab replay '{id}'"));
        let r = ksumlab(&["replay", id]);
        assert_eq!(r.status.code(), Some(1), "{id}");
        let o: Value = serde_json::from_slice(&r.stdout).unwrap();
        assert_eq!(o["pass"], false);
        // The replay spells out both sides; the recorded error must match.
        assert!(o["observed"].as_str().unwrap().ends_with(f["observed"].as_str().unwrap()), "{id}");
    }
}

#[test]
fn scan_csv_has_header_and_rows() {
    let out = ksumlab(&["scan-bilinear", "--family", "prime", "--q-max", "500", "--points", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(ksumlab::SCAN_CSV_HEADER));
    // Log-spaced points may land on the same prime.
    assert!((1..=3).contains(&lines.count()));
}

#[test]
fn bad_input_is_an_error() {
    let out = ksumlab(&["kl", "--a", "1", "--q", "0"]);
    assert!(!out.status.success());
}
