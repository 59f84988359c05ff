// SPDX-License-Identifier: Apache-2.0

//! End-to-end behaviour of the `urc` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn urc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urc"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("spawn urc")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = r#"
name = "small"
[model]
family = "single_qubit"
rabi = 1.0
[pulse]
segments = 6
time = 1.0
[pulse.scan]
start = 1.0
stop = 1.0
step = 0.25
[target]
fixture = "single_qubit_z"
[objective]
robustness = "none"
weight = 0.0
[optimizer]
seed = 5
n_starts = 2
max_iterations = 200
[verify]
lambdas = [0.0]
operators = ["z"]
random = 0
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_source_is_a_config_error_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let res = urc(&["optimize", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &format!("{SMALL}\nbogus = 1\n"));
    let out = tmp.path().join("out");
    let res = urc(&["optimize", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn optimize_then_verify_with_zero_only_grid() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    let res = urc(&["optimize", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["config.toml", "pulse.csv", "pulse.csv.json", "summary.csv", "starts.csv", "trace.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }

    let vout = tmp.path().join("verify");
    let res = urc(&["verify", "--config", p(&out.join("config.toml")), "--pulse", p(&out.join("pulse.csv")), "--out", p(&vout)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let sweep = fs::read_to_string(vout.join("sweep.csv")).unwrap();
    // header plus one λ = 0 row for the single operator
    assert_eq!(sweep.lines().count(), 2, "{sweep}");
}

#[test]
fn verify_rejects_a_pulse_from_another_model_unless_forced() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    assert_eq!(urc(&["optimize", "--config", p(&cfg), "--out", p(&out)]).status.code(), Some(0));

    let other = write_config(tmp.path(), "other.toml", &SMALL.replace("rabi = 1.0", "rabi = 2.0"));
    let vout = tmp.path().join("verify");
    let pulse = out.join("pulse.csv");
    let res = urc(&["verify", "--config", p(&other), "--pulse", p(&pulse), "--out", p(&vout)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!vout.join("sweep.csv").exists());
    let res = urc(&["verify", "--config", p(&other), "--pulse", p(&pulse), "--out", p(&vout), "--force"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn single_point_scan_resumes_from_cache() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("scan");
    let first = urc(&["scan-mct", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let scan = fs::read_to_string(out.join("scan.csv")).unwrap();
    assert_eq!(scan.lines().count(), 2);
    let mct = fs::read(out.join("mct.csv")).unwrap();

    let second = urc(&["scan-mct", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(second.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&second.stderr).contains("already complete"));
    assert_eq!(fs::read_to_string(out.join("scan.csv")).unwrap(), scan);
    assert_eq!(fs::read(out.join("mct.csv")).unwrap(), mct);
}

#[test]
fn fixtures_are_listed_sorted() {
    let res = urc(&["fixtures", "list"]);
    assert_eq!(res.status.code(), Some(0));
    let names: Vec<String> = String::from_utf8(res.stdout).unwrap().lines().map(str::to_owned).collect();
    assert!(!names.is_empty());
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert!(names.iter().any(|n| n == "single_qubit_z"));
}

#[test]
fn unknown_fixture_is_a_config_error() {
    assert_eq!(urc(&["fixtures", "dump", "no_such_fixture"]).status.code(), Some(2));
}
