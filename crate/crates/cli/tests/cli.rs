use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cmfe_cli::acceptance::determinism_config;
use cmfe_cli::commands::{cmd_bounds, cmd_check, cmd_simulate};
use cmfe_cli::config::{parse_config, read_config};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn cmfe(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cmfe")).args(args).output().expect("binary runs")
}

fn last_row(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().last().unwrap().split(',').map(str::to_owned).collect()
}

#[test]
fn check_accepts_admissible_singular_kernel() {
    let cfg = parse_config(&config_path("singular_piecewise.toml")).unwrap();
    assert_eq!((cfg.model.gamma, cfg.model.sigma), (0.0, 0.25));
    assert!(cmd_check(&cfg, false).unwrap().holds());
    let out = cmfe(&["check", config_path("singular_piecewise.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bounds_limit_column_matches_closed_form() {
    let cfg = parse_config(&config_path("fragmentation_long_time.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_bounds(&cfg, dir.path()).unwrap();
    assert!((report.cmfe_limit - 0.05).abs() < 1e-15);
    let header = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let col = header.lines().next().unwrap().split(',').position(|h| h == "cmfe_limit").unwrap();
    let row = last_row(&dir.path().join("bounds.csv"));
    assert_eq!(row[0].parse::<f64>().unwrap(), 200.0);
    approx::assert_relative_eq!(row[col].parse::<f64>().unwrap(), 0.05, max_relative = 1e-12);
    assert!(dir.path().join("constants.json").exists());
}

#[test]
fn zero_horizon_writes_single_row() {
    let mut cfg = determinism_config();
    cfg.controls.t_end = 0.0;
    let dir = tempfile::tempdir().unwrap();
    cmd_simulate(&cfg, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,"));
}

#[test]
fn echoed_config_reproduces_moments_bitwise() {
    let cfg = determinism_config();
    let first = tempfile::tempdir().unwrap();
    cmd_simulate(&cfg, first.path()).unwrap();
    let echo = read_config(&first.path().join("config.resolved.toml")).unwrap();
    assert_eq!(echo, cfg);
    let second = tempfile::tempdir().unwrap();
    cmd_simulate(&echo, second.path()).unwrap();
    assert_eq!(
        fs::read(first.path().join("moments.csv")).unwrap(),
        fs::read(second.path().join("moments.csv")).unwrap()
    );
}

#[test]
fn manifest_records_version_hash_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmfe(&[
        "simulate",
        config_path("singular_piecewise.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["admissible"], true);
    assert_eq!(manifest["threads"], 2);
    assert_eq!(manifest["partial"], false);
    for f in ["moments.csv", "ledger.csv", "config.resolved.toml"] {
        assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o == f), "{f} missing");
    }
    let snaps: Vec<_> = fs::read_dir(dir.path().join("snapshots")).unwrap().collect();
    assert_eq!(snaps.len(), 3);
    let defect: f64 = last_row(&dir.path().join("ledger.csv")).last().unwrap().parse().unwrap();
    assert!(defect.abs() <= 1e-8);
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(config_path("singular_piecewise.toml")).unwrap();
    fs::write(&bad, text.replace("sigma = 0.25", "sigma = 0.6")).unwrap();

    let out = cmfe(&["simulate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma_range"));

    let out = cmfe(&["check", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL sigma_range"));

    let out = cmfe(&["simulate", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_subset_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmfe(&["verify", "--only", "2,11", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("criterion")).count(), 2);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 2);
}
