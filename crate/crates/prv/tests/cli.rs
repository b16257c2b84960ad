//! Black-box tests of the `prv` binary: exit codes, JSON output shape, and
//! determinism of seeded commands.

use std::path::Path;
use std::process::{Command, Output};

fn prv_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prv"))
}

fn run(args: &[&str]) -> Output {
    prv_bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_factor_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("model.toml");
    std::fs::write(
        &path,
        "[factor_model]\nd = 8\nn_obs = 64\nseed = 11\n",
    )
    .expect("write config");
    path
}

#[test]
fn simulate_then_estimate_lambda_zero_matches_rv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_factor_config(dir.path());
    let csv = dir.path().join("panel.csv");
    let sim = stdout_json(&run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]));
    assert_eq!(sim["n"], 64);
    assert!(dir.path().join("panel.csv.truth.json").exists());

    let est = stdout_json(&run(&["estimate", "--input", csv.to_str().unwrap(), "--lambda", "0"]));
    let panel = prv::io::ingest_csv(&csv, prv::io::IngestOptions::default()).unwrap();
    let rv = prv::realized_variance(&panel);
    let matrix = est["matrix"].as_array().unwrap();
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.as_array().unwrap().iter().enumerate() {
            let diff = (v.as_f64().unwrap() - rv.get(i, j)).abs();
            assert!(diff < 1e-10, "entry ({i},{j}) differs by {diff}");
        }
    }
}

#[test]
fn estimate_with_bootstrap_tuning_reports_low_rank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_factor_config(dir.path());
    let csv = dir.path().join("panel.csv");
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    let est = stdout_json(&run(&[
        "estimate",
        "--input",
        csv.to_str().unwrap(),
        "--tune",
        "bootstrap",
        "--B",
        "500",
        "--seed",
        "3",
    ]));
    let rank = est["rank"].as_u64().unwrap();
    assert!((1..=6).contains(&rank), "rank {rank} outside 1..=6");
    assert!(est["lambda"].as_f64().unwrap() > 0.0);
}

#[test]
fn mc_output_is_reproducible_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_factor_config(dir.path());
    let args = [
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--replications",
        "10",
        "--B",
        "50",
        "--seed",
        "21",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout, "same seed must give identical output");

    let c = prv_bin()
        .args(["mc", "--config", cfg.to_str().unwrap(), "--replications", "10", "--B", "50"])
        .env("PRV_SEED", "21")
        .output()
        .unwrap();
    assert_eq!(a.stdout, c.stdout, "PRV_SEED must match --seed");
}

#[test]
fn spot_command_recovers_a_rank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_factor_config(dir.path());
    let csv = dir.path().join("panel.csv");
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    let spot = stdout_json(&run(&[
        "spot",
        "--input",
        csv.to_str().unwrap(),
        "--t",
        "0.4",
        "--h",
        "0.2",
        "--tune-window",
        "--B",
        "200",
        "--seed",
        "7",
    ]));
    assert!(spot["rank"].as_u64().unwrap() >= 1);
    assert_eq!(spot["outside_guarantee_band"], serde_json::Value::Bool(false));
}

#[test]
fn usage_errors_exit_with_code_1() {
    let out = run(&["estimate", "--input", "x.csv", "--lambda", "1", "--tune", "bootstrap"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["estimate"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time,a,b\n0,1.0,2.0\n1,oops,2.1\n2,1.1,2.2\n").unwrap();
    let out = run(&["estimate", "--input", bad.to_str().unwrap(), "--lambda", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    let out = run(&["estimate", "--input", "/nonexistent/p.csv", "--lambda", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}
