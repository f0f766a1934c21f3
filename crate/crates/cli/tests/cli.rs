//! Runs the `jdtc` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jdtc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdtc")).args(args).output().unwrap()
}

fn run_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--trials", "2", "--seed", "5", "--threads", "2", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    jdtc(&args)
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), &["--algo", "etd"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("example1_etd.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scan,true_n,mean_est_n,mean_ospa,mean_miscls,mean_jpm,trials,failures"));
    assert_eq!(lines.count(), 30);
    let m = manifest(&dir.path().join("example1_etd.manifest.json"));
    assert_eq!(m["scenario"], "example1");
    assert_eq!(m["algorithm"], "etd");
    assert_eq!(m["trials"], 2);
    assert!(!dir.path().join("example1_etd.raw.csv").exists());
}

#[test]
fn gamma_flag_reaches_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), &["--scenario", "example2", "--gamma", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir.path().join("example2_cjde-lmb.manifest.json"));
    assert_eq!(m["config"]["coefficients"]["gamma"], 10.0);
}

#[test]
fn raw_flag_writes_per_trial_scores() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), &["--algo", "dte", "--raw"]);
    assert!(out.status.success());
    let raw = fs::read_to_string(dir.path().join("example1_dte.raw.csv")).unwrap();
    let mut lines = raw.lines();
    assert_eq!(lines.next(), Some("trial,seed,scan,true_n,est_n,ospa,miscls,jpm"));
    assert_eq!(lines.count(), 60);
}

#[test]
fn manifest_config_runs_again_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    assert!(run_small(&first, &["--algo", "dte"]).status.success());
    let m = manifest(&first.join("example1_dte.manifest.json"));
    let cfg = dir.path().join("replay.json");
    fs::write(&cfg, serde_json::to_string(&m["config"]).unwrap()).unwrap();
    let out = jdtc(&["run", "--scenario", "file", "--config", cfg.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(first.join("example1_dte.csv")).unwrap(),
        fs::read(second.join("example1_dte.csv")).unwrap()
    );
}

#[test]
fn validate_reports_the_error_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"trials\": \"many\"\n}\n").unwrap();
    let out = jdtc(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("{}:2:", bad.display())), "{err}");
}

#[test]
fn validate_accepts_a_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("short.json");
    fs::write(&ok, "{\"trials\": 3}").unwrap();
    let out = jdtc(&["validate", "--config", ok.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(jdtc(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(jdtc(&["run", "--scenario", "file"]).status.code(), Some(1));
    assert_eq!(jdtc(&["run", "--threads", "0"]).status.code(), Some(1));
    assert_eq!(jdtc(&["--help"]).status.code(), Some(0));
}
