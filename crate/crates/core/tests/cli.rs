use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coopest_core::harness::{parse_metrics_csv, MetricsRecord, ScenarioConfig, CSV_HEADER};
use coopest_core::Error;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopest"))
}

fn write_config(dir: &Path, n_nodes: usize, runs: usize) -> PathBuf {
    let mut cfg = ScenarioConfig::default();
    cfg.runs = runs;
    cfg.network.n_nodes = n_nodes;
    cfg.game.grid_size = 128;
    let path = dir.join("cfg.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn simulate_writes_csv_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 4, 3);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let rows = parse_metrics_csv(&text).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows
        .iter()
        .all(|r| r.axis_value.is_none() && r.n_nodes == 4));
    assert_eq!(
        rows.iter().map(|r| r.seed).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 6, 2);
    let run = |seed: &str| {
        let out = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--seed", seed])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        out.stdout
    };
    assert_eq!(run("7"), run("7"));
    assert_ne!(run("7"), run("8"));
}

#[test]
fn simulate_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 3, 2);
    let path = dir.path().join("m.json");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--format", "json", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let recs: Vec<MetricsRecord> =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(recs.len(), 2);
}

#[test]
fn sweep_writes_one_row_per_value_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 4, 1);
    let path = dir.path().join("s.csv");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args([
            "--axis", "n_nodes", "--values", "2,3,5", "--runs", "2", "--out",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_metrics_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    let nodes: Vec<usize> = rows.iter().map(|r| r.n_nodes).collect();
    assert_eq!(nodes, vec![2, 2, 3, 3, 5, 5]);
    assert!(rows.iter().all(|r| r.axis_value == Some(r.n_nodes as f64)));
}

#[test]
fn stability_check_small_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 6, 1);
    let out = bin()
        .args(["stability-check", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .trim_end()
        .ends_with("stable"));
}

#[test]
fn stability_check_rejects_large_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 9, 1);
    let out = bin()
        .args(["stability-check", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("network.n_nodes"));
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[game]\nkappa = 2.0\n[network]\nobs_min = 1\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("game.kappa") && err.contains("network.obs_min"),
        "{err}"
    );

    std::fs::write(&path, "[game]\nkapa = 0.1\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn bad_arguments_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 3, 1);
    let out_path = dir.path().join("x.csv");
    let unknown_axis = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "nodes", "--values", "2", "--runs", "1", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&unknown_axis), 1);
    let bad_value = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args([
            "--axis", "kappa", "--values", "0.1,abc", "--runs", "1", "--out",
        ])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&bad_value), 1);
    let bad_format = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--format", "xml"])
        .output()
        .unwrap();
    assert_eq!(code(&bad_format), 1);
    assert_eq!(code(&bin().arg("simulate").output().unwrap()), 1);
}

#[test]
fn io_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("nope.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&missing), 3);
    let cfg = write_config(dir.path(), 3, 1);
    let unwritable = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("no/such/dir/out.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&unwritable), 3);
}

#[test]
fn exit_code_mapping() {
    assert_eq!(Error::Invariant("x".into()).exit_code(), 2);
    assert_eq!(Error::Config(vec![]).exit_code(), 1);
    assert_eq!(Error::InvalidInput("x".into()).exit_code(), 1);
}
