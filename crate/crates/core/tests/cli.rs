//! The stablespde binary end to end: exit codes, artifacts, config errors.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stablespde"))
        .args(args)
        .current_dir(dir)
        .env("STABLESPDE_WORKERS", "2")
        .output()
        .unwrap()
}

const SOLVE: &str = r#"seed = 5
output_dir = "out"
replicates = 3
snapshot_times = [0.01]

[model]
alpha = 1.5
gamma = 0.75
d = 1

[grid]
box_halfwidth = 4.0
nx = 64
dt = 0.001
horizon = 0.01

[experiment]
kind = "solve"
checks = ["mass-mean"]
write_snapshots = true
"#;

#[test]
fn verify_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin(tmp.path(), &["verify", "gamblers-ruin", "-n", "2000", "--b", "0.04", "--delta", "0.5", "--seed", "3", "--out", "a"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS"));
    assert!(tmp.path().join("a/verify-gamblers-ruin/ruin.csv").exists());

    let o = bin(tmp.path(), &["report", "a"]);
    assert_eq!(o.status.code(), Some(0));
    let md = fs::read_to_string(tmp.path().join("a/report/summary.md")).unwrap();
    assert!(md.contains("verify-gamblers-ruin"));
}

#[test]
fn solve_writes_snapshots_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("solve.toml"), SOLVE).unwrap();
    let o = bin(tmp.path(), &["solve", "solve.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let snaps = fs::read_dir(tmp.path().join("out/solve/snapshots")).unwrap().count();
    assert!(snaps > 0);
    let manifest = fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"config_sha256\""));
}

#[test]
fn bad_input_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), SOLVE.replace("nx = 64", "nx = 0")).unwrap();
    let o = bin(tmp.path(), &["solve", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 13"), "{}", String::from_utf8_lossy(&o.stderr));

    // a solve config is not a sweep
    fs::write(tmp.path().join("solve.toml"), SOLVE).unwrap();
    assert_eq!(bin(tmp.path(), &["sweep", "solve.toml"]).status.code(), Some(2));
    assert_eq!(bin(tmp.path(), &["report", "nowhere"]).status.code(), Some(2));
}
