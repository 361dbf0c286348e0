//! Command-line behaviour: exit codes, outputs and written artifacts.

mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use common::sq_dist;
use piranha::cli::{run, EXIT_CHECK_FAILED, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use piranha::io::{load_series, read_trace, save_weights};
use piranha::net::{Shape, Weights};
use piranha::series::Series;
use tempfile::TempDir;

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

impl Outcome {
    fn values(&self) -> HashMap<String, String> {
        parse_kv(&self.out)
    }
}

fn parse_kv(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn piranha(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("piranha").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sine_file(dir: &TempDir, len: usize) -> std::path::PathBuf {
    let path = dir.path().join("sine.csv");
    let len = len.to_string();
    let o = piranha(&[
        "gen-data",
        "--kind",
        "sine",
        "--freq",
        "0.04",
        "--len",
        &len,
        "--out",
        path_str(&path),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    path
}

#[test]
fn training_requires_data() {
    let o = piranha(&[
        "train", "--n", "4", "--gamma", "0.5", "--K", "3", "--T", "10", "--out", "x",
    ]);
    assert_eq!(o.code, EXIT_USAGE);
}

#[test]
fn zero_discount_training_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, 30);
    let out = dir.path().join("run");
    for cmd in ["train", "compare"] {
        let o = piranha(&[
            cmd,
            "--data",
            path_str(&data),
            "--n",
            "4",
            "--gamma",
            "0",
            "--K",
            "3",
            "--T",
            "10",
            "--out",
            path_str(&out),
        ]);
        assert_eq!(o.code, EXIT_USAGE);
        assert!(o.err.contains("gamma = 0"), "{}", o.err);
    }
    assert!(!out.exists());
}

#[test]
fn missing_file_is_a_data_error() {
    let o = piranha(&[
        "train",
        "--data",
        "/nonexistent/series.csv",
        "--n",
        "4",
        "--gamma",
        "0.5",
        "--K",
        "3",
        "--T",
        "10",
        "--out",
        "x",
    ]);
    assert_eq!(o.code, EXIT_DATA);
}

#[test]
fn train_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, 40);
    let out = dir.path().join("run");
    let o = piranha(&[
        "train",
        "--data",
        path_str(&data),
        "--n",
        "5",
        "--gamma",
        "0.6",
        "--K",
        "5",
        "--T",
        "30",
        "--max-iter",
        "25",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    let v = o.values();
    let initial: f64 = v["initial_objective"].parse().unwrap();
    let last: f64 = v["final_objective"].parse().unwrap();
    assert!(last < initial);
    assert!(out.join("weights.txt").exists());
    let config = parse_kv(&fs::read_to_string(out.join("config.txt")).unwrap());
    assert_eq!(config["K"], "5");
    assert_eq!(config["state_update"], "rollout");
    let trace = read_trace::<f64>(&out.join("trace.csv")).unwrap();
    assert_eq!(trace.rows.last().unwrap().objective, last);
    for pair in trace.rows.windows(2) {
        assert!(pair[1].objective <= pair[0].objective);
    }
}

#[test]
fn eps0_picks_the_horizon() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, 80);
    let out = dir.path().join("run");
    let b = piranha(&[
        "bound", "--eps0", "1", "--gamma", "0.3", "--T", "10", "--n", "3", "--m", "1",
    ]);
    assert_eq!(b.code, EXIT_OK);
    let k = b.values()["K"].clone();
    let o = piranha(&[
        "train",
        "--data",
        path_str(&data),
        "--n",
        "3",
        "--gamma",
        "0.3",
        "--eps0",
        "1",
        "--T",
        "10",
        "--max-iter",
        "2",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    assert_eq!(o.values()["K"], k);

    let both = piranha(&[
        "train",
        "--data",
        path_str(&data),
        "--n",
        "3",
        "--gamma",
        "0.3",
        "--eps0",
        "1",
        "--K",
        "2",
        "--T",
        "10",
        "--max-iter",
        "2",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(both.code, EXIT_OK);
    assert_eq!(both.values()["K"], "2");
    assert!(both.err.contains("warning"));
}

#[test]
fn bound_reports_constants() {
    let o = piranha(&[
        "bound", "--eps0", "0.5", "--gamma", "0.25", "--T", "1", "--n", "2", "--m", "1",
    ]);
    assert_eq!(o.code, EXIT_OK);
    let v = o.values();
    assert_eq!(v["K"], "4");
    let c0: f64 = v["C0"].parse().unwrap();
    assert!((c0 - 2.0).abs() < 1e-12);
    let c1: f64 = v["C1"].parse().unwrap();
    assert!((c1 - 2.0 * 8f64.sqrt()).abs() < 1e-12);
}

#[test]
fn replay_with_zero_weights_scores_the_targets() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, 30);
    let weights = dir.path().join("zero.txt");
    save_weights(&Weights::<f64>::zeros(Shape::new(1, 3).unwrap()), &weights).unwrap();
    let o = piranha(&[
        "replay",
        "--weights",
        path_str(&weights),
        "--data",
        path_str(&data),
        "--t-switch",
        "10",
        "--T",
        "20",
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    let got: f64 = o.values()["replay_error"].parse().unwrap();
    let x: Series<f64> = load_series(&data, Some(1)).unwrap();
    let expect: f64 = (10..=20).map(|t| sq_dist(&[0.0], x.at(t).unwrap())).sum();
    assert!(
        (got - expect).abs() <= 1e-12 * expect.max(1.0),
        "{got} vs {expect}"
    );

    let csv = fs::read_to_string(dir.path().join("zero.txt.replay.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,target_0,prediction_0");
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn replay_rejects_late_switch() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, 30);
    let weights = dir.path().join("zero.txt");
    save_weights(&Weights::<f64>::zeros(Shape::new(1, 3).unwrap()), &weights).unwrap();
    for t in ["20", "25", "0"] {
        let o = piranha(&[
            "replay",
            "--weights",
            path_str(&weights),
            "--data",
            path_str(&data),
            "--t-switch",
            t,
            "--T",
            "20",
        ]);
        assert_eq!(o.code, EXIT_USAGE, "t-switch {t}");
    }
}

#[test]
fn gradcheck_passes_by_default_and_fails_with_huge_step() {
    let o = piranha(&["gradcheck"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.out);
    assert_eq!(o.values()["pass"], "true");
    let o = piranha(&["gradcheck", "--h", "10"]);
    assert_eq!(o.code, EXIT_CHECK_FAILED);
    assert_eq!(o.values()["pass"], "false");
}

#[test]
fn gradcheck_warns_when_recurrence_exceeds_limit() {
    let o = piranha(&["gradcheck", "--gamma", "0.99", "--n", "6"]);
    assert!(o.err.contains("1/sqrt(gamma)"), "{}", o.err);
    let o = piranha(&["gradcheck", "--gamma", "0.99", "--n", "6", "--clip"]);
    assert!(!o.err.contains("1/sqrt(gamma)"));
}

#[test]
fn compare_on_flat_series_scores_zero() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("flat.csv");
    fs::write(&data, "0\n".repeat(30)).unwrap();
    let out = dir.path().join("cmp");
    let o = piranha(&[
        "compare",
        "--data",
        path_str(&data),
        "--n",
        "3",
        "--gamma",
        "0.5",
        "--K",
        "3",
        "--T",
        "20",
        "--max-iter",
        "50",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    for name in [
        "summary.txt",
        "piranha_trace.csv",
        "baseline_trace.csv",
        "piranha_weights.txt",
        "baseline_weights.txt",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let summary = parse_kv(&fs::read_to_string(out.join("summary.txt")).unwrap());
    let pi: f64 = summary["piranha_objective"].parse().unwrap();
    let bl: f64 = summary["baseline_objective"].parse().unwrap();
    let initial: f64 = summary["initial_replay_error"].parse().unwrap();
    let replayed: f64 = summary["piranha_replay_error"].parse().unwrap();
    assert!(pi < 1e-6 && bl < 1e-6, "{pi} {bl}");
    assert!(replayed <= initial);
    assert_eq!(summary["t_switch"], "10");
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_piranha");
    let status = Command::new(bin)
        .args([
            "bound", "--eps0", "1", "--gamma", "0.5", "--T", "5", "--n", "3", "--m", "1",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
    let status = Command::new(bin).arg("no-such-command").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&help.stdout).contains("gradcheck"));
}
