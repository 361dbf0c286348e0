//! Acceptance gate. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use piranha::cli;
use piranha::cost::{discounted_cost, immediate_cost, Hyperparams};
use piranha::gradient::{fd_grad, grad, max_relative_error, truncation_horizon};
use piranha::io::{format_trace, load_weights, save_series, save_weights};
use piranha::net::{apply_s, rollout, Shape, Tanh, Weights};
use piranha::optimizer::{initial_weights, piranha_train, StepPolicy, TrainConfig, TrainResult, TrainTrace};
use piranha::replay::replay_error;
use piranha::series::{gen_series, Series, SeriesKind};
use tempfile::TempDir;

const INSTANCES: u64 = 20;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn gradient_agreement() -> Verdict {
    let (steps, horizon, gamma) = (10, 6, 0.5);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..INSTANCES {
        let inst = acceptance_instance(i, steps, horizon, gamma);
        let hp = Hyperparams::new(gamma, horizon, steps).unwrap();
        let seq = rollout(&inst.w, &inst.x, steps, &Tanh).unwrap();
        let g = grad(&inst.w, &seq, &inst.x, &hp, &Tanh).unwrap();
        let fd = fd_grad(&inst.w, &seq, &inst.x, &hp, 1e-5, &Tanh).unwrap();
        worst = worst.max(max_relative_error(&g, &fd, 1e-10));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-5 && secs < 5.0,
        format!("max relative error {worst:.3e} (tol 1e-5), {secs:.2}s (limit 5s)"),
    )
}

fn truncation_bound() -> Verdict {
    let (steps, horizon, gamma) = (10, 6, 0.5);
    let mut violations = 0;
    let mut tightest = 0.0f64;
    for i in 0..INSTANCES {
        let inst = acceptance_instance(i, steps, horizon, gamma);
        let hp = Hyperparams::new(gamma, horizon, steps).unwrap();
        let seq = rollout(&inst.w, &inst.x, steps, &Tanh).unwrap();
        let short = grad(&inst.w, &seq, &inst.x, &hp, &Tanh).unwrap();
        let long = grad(
            &inst.w,
            &seq,
            &inst.x,
            &hp.with_horizon(2 * horizon).unwrap(),
            &Tanh,
        )
        .unwrap();
        let report = truncation_horizon(1.0, gamma, steps, inst.shape).unwrap();
        let bound = report.c1 * gamma.powf(horizon as f64 / 2.0);
        let gap = short.sub(&long).norm();
        if gap > bound {
            violations += 1;
        }
        tightest = tightest.max(gap / bound);
    }
    verdict(
        violations == 0,
        format!("{violations} violations, largest gap/bound {tightest:.3e}"),
    )
}

fn operator_collapse() -> Verdict {
    let mut mismatches = 0;
    for i in 0..INSTANCES {
        let steps = 1 + (i as usize % 10);
        let inst = acceptance_instance(i, steps, 1, 0.5);
        let mut r = rng(500 + i);
        let mut seq = random_states(&mut r, inst.shape.n(), steps);
        for _ in 0..=steps {
            seq = apply_s(&inst.w, &seq, &inst.x, &Tanh).unwrap();
        }
        if seq != rollout(&inst.w, &inst.x, steps, &Tanh).unwrap() {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!("{mismatches} of {INSTANCES} not bitwise equal"),
    )
}

fn bellman_recursion() -> Verdict {
    let (steps, horizon, gamma) = (10, 6, 0.5);
    let mut worst = 0.0f64;
    for i in 0..INSTANCES {
        let inst = acceptance_instance(i, steps, horizon, gamma);
        let mut r = rng(700 + i);
        let seq = random_states(&mut r, inst.shape.n(), steps);
        let hp = Hyperparams::new(gamma, horizon, steps).unwrap();
        let lhs = discounted_cost(&inst.w, &seq, &inst.x, &hp, &Tanh).unwrap().total;
        let advanced = apply_s(&inst.w, &seq, &inst.x, &Tanh).unwrap();
        let tail = discounted_cost(
            &inst.w,
            &advanced,
            &inst.x.shifted(1),
            &hp.with_horizon(horizon - 1).unwrap(),
            &Tanh,
        )
        .unwrap()
        .total;
        let rhs = immediate_cost(&seq, &inst.x).unwrap() + gamma * tail;
        worst = worst.max(rel_diff(lhs, rhs));
    }
    verdict(
        worst <= 1e-12,
        format!("max relative error {worst:.3e} (tol 1e-12)"),
    )
}

fn zero_discount() -> Verdict {
    let mut inexact = 0;
    for i in 0..INSTANCES {
        let inst = acceptance_instance(i, 10, 6, 0.5);
        let mut r = rng(900 + i);
        let seq = random_states(&mut r, inst.shape.n(), 10);
        let hp = Hyperparams::new(0.0, 6, 10).unwrap();
        let d = discounted_cost(&inst.w, &seq, &inst.x, &hp, &Tanh).unwrap().total;
        if d != immediate_cost(&seq, &inst.x).unwrap() {
            inexact += 1;
        }
    }
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("sine.csv");
    save_series(&benchmark_series(), &data).unwrap();
    let out = dir.path().join("run");
    let argv = [
        "piranha",
        "train",
        "--data",
        data.to_str().unwrap(),
        "--n",
        "8",
        "--gamma",
        "0",
        "--K",
        "10",
        "--T",
        "50",
        "--out",
        out.to_str().unwrap(),
    ];
    let code = cli::run(argv, &mut Vec::new(), &mut Vec::new());
    verdict(
        inexact == 0 && code == cli::EXIT_USAGE,
        format!("{inexact} inexact of {INSTANCES}, train with gamma=0 exits {code}"),
    )
}

const BENCH_GAMMA: f64 = 0.7;
const BENCH_T: usize = 50;

fn benchmark_series() -> Series<f64> {
    gen_series(
        &SeriesKind::Sine {
            freq: 0.04,
            phase: 0.0,
        },
        60,
        1,
        0,
    )
    .unwrap()
}

fn benchmark_config() -> TrainConfig<f64> {
    let mut cfg = TrainConfig::new(Hyperparams::new(BENCH_GAMMA, 10, BENCH_T).unwrap());
    cfg.max_iter = 2000;
    cfg.step = StepPolicy::backtracking(0.1);
    cfg.clip = true;
    cfg.seed = 0;
    cfg
}

struct Benchmark {
    shape: Shape,
    x: Series<f64>,
    result: TrainResult<f64>,
    trace: TrainTrace<f64>,
    secs: f64,
}

fn run_benchmark() -> Benchmark {
    let shape = Shape::new(1, 8).unwrap();
    let x = benchmark_series();
    let start = Instant::now();
    let (result, trace) = piranha_train(&x, shape, &benchmark_config(), None, &Tanh).unwrap();
    Benchmark {
        shape,
        x,
        result,
        trace,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn monotone_descent(b: &Benchmark) -> Verdict {
    let rows = &b.trace.rows;
    let increases = rows
        .windows(2)
        .filter(|p| p[0].alpha > 0.0 && !(p[1].objective < p[0].objective))
        .count();
    let ratio = b.result.objective / b.result.initial_objective;
    verdict(
        increases == 0 && ratio <= 0.2 && b.result.steps <= 2000 && b.secs < 60.0,
        format!(
            "{increases} non-decreasing steps, objective {:.4e} -> {:.4e} (ratio {ratio:.4}, limit 0.2) \
             in {} iterations ({}), {:.2}s (limit 60s)",
            b.result.initial_objective, b.result.objective, b.result.steps, b.result.termination, b.secs
        ),
    )
}

fn clipping_invariant(b: &Benchmark) -> Verdict {
    let limit = 1.0 / BENCH_GAMMA.sqrt() + 1e-12;
    let worst = b.trace.rows.iter().map(|r| r.f_norm_inf).fold(0.0, f64::max);
    let bad = b.trace.rows.iter().filter(|r| r.f_norm_inf > limit).count();
    verdict(
        bad == 0,
        format!("{bad} rows over limit, max ||F||_inf {worst:.6} (limit {limit:.6})"),
    )
}

fn replay_improvement(b: &Benchmark) -> Verdict {
    let t_switch = BENCH_T / 2;
    let before = replay_error(&initial_weights(b.shape, 0), &b.x, t_switch, BENCH_T, &Tanh).unwrap();
    let after = replay_error(&b.result.weights, &b.x, t_switch, BENCH_T, &Tanh).unwrap();
    verdict(
        after < before,
        format!("replay error at t_switch={t_switch}: initial {before:.4e}, trained {after:.4e}"),
    )
}

fn determinism(b: &Benchmark) -> Verdict {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    fs::write(&first, format_trace(&b.trace)).unwrap();
    let again = run_benchmark();
    fs::write(&second, format_trace(&again.trace)).unwrap();
    let same = fs::read(&first).unwrap() == fs::read(&second).unwrap();
    verdict(
        same,
        format!("{} trace rows, files identical: {same}", b.trace.rows.len()),
    )
}

fn persistence() -> Verdict {
    let dir = TempDir::new().unwrap();
    let mut weight_failures = 0;
    let mut worst = 0.0f64;
    for i in 0..INSTANCES {
        let inst = acceptance_instance(i, 10, 6, 0.5);
        let mut r = rng(1100 + i);
        let scaled = Weights::new(
            uniform_matrix(&mut r, inst.shape.n(), inst.shape.n(), 10f64.powi(i as i32 - 10)),
            inst.w.g().clone(),
        )
        .unwrap();
        let path = dir.path().join(format!("w{i}.txt"));
        for w in [&inst.w, &scaled] {
            save_weights(w, &path).unwrap();
            let back: Weights<f64> = load_weights(&path).unwrap();
            if &back != w {
                weight_failures += 1;
            }
        }
        let raw: Vec<Vec<f64>> = random_series(&mut r, 30, inst.shape.m())
            .values()
            .iter()
            .map(|row| row.iter().map(|v| v * 1e3 + 17.0).collect())
            .collect();
        let series = Series::normalize(&raw).unwrap();
        for (a, b) in raw.iter().flatten().zip(series.raw_values().iter().flatten()) {
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    verdict(
        weight_failures == 0 && worst <= 1e-12,
        format!(
            "{weight_failures} weight mismatches, max normalize round-trip error {worst:.3e} (tol 1e-12)"
        ),
    )
}

fn main() -> ExitCode {
    let bench = run_benchmark();
    let results = [
        gradient_agreement(),
        truncation_bound(),
        operator_collapse(),
        bellman_recursion(),
        zero_discount(),
        monotone_descent(&bench),
        clipping_invariant(&bench),
        replay_improvement(&bench),
        determinism(&bench),
        persistence(),
    ];
    let mut failed = 0;
    for (i, v) in results.iter().enumerate() {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {tag} {}", i + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
