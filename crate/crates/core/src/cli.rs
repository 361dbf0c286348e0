//! Command-line driver. Every command prints `key=value` lines on stdout and
//! returns a stable exit code: 0 success, 1 check failed, 2 usage, 3 data,
//! 4 numeric failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::baseline_onestep_train;
use crate::cost::Hyperparams;
use crate::error::Error;
use crate::gradient::{fd_grad, grad, max_relative_error, truncation_horizon, TruncationReport};
use crate::io;
use crate::net::{rollout, Shape, Squash, Tanh, Weights};
use crate::optimizer::{
    clip_recurrent, initial_weights, piranha_train, StateUpdate, StepPolicy, TrainConfig,
};
use crate::replay::replay;
use crate::series::{gen_series, PadMode, Series, SeriesKind, SineComponent};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "piranha",
    version,
    about = "Policy-iteration training of recurrent networks for sequence replay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic series file.
    GenData(GenDataArgs),
    /// Train a network on a series file.
    Train(TrainArgs),
    /// Replay a series from a teacher-forced prefix with trained weights.
    Replay(ReplayArgs),
    /// Compare the analytic gradient with central differences on a random instance.
    Gradcheck(GradcheckArgs),
    /// Compute the truncation horizon for a gradient error tolerance.
    Bound(BoundArgs),
    /// Train with policy iteration and with the one-step baseline on the same data.
    Compare(TrainArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Sine,
    Sines,
    Square,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, value_enum, default_value = "sine")]
    kind: Kind,
    #[arg(long, default_value_t = 0.04)]
    freq: f64,
    #[arg(long, default_value_t = 0.0)]
    phase: f64,
    /// Components `amp:freq:phase`, comma-separated (for `--kind sines`).
    #[arg(long)]
    components: Option<String>,
    #[arg(long)]
    len: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Pad {
    None,
    Hold,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Channel count; inferred from the file when omitted.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    gamma: f64,
    #[arg(long = "K", value_name = "K")]
    horizon: Option<usize>,
    /// Derive K from this gradient error tolerance.
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long = "T", value_name = "T")]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, conflicts_with = "backtrack")]
    fixed_step: bool,
    #[arg(long)]
    backtrack: bool,
    #[arg(long, default_value_t = 0.5)]
    shrink: f64,
    #[arg(long, default_value_t = 40)]
    max_halvings: usize,
    #[arg(long)]
    no_clip: bool,
    /// `rollout` or `smooth:J`.
    #[arg(long, default_value = "rollout", value_parser = parse_state_update)]
    state_update: StateUpdate,
    #[arg(long, default_value_t = 1e-8)]
    stop_tol: f64,
    #[arg(long, value_enum, default_value = "none")]
    pad: Pad,
    /// Record wall-clock milliseconds in the trace.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    t_switch: usize,
    /// Last replayed index; defaults to the final sample.
    #[arg(long = "T", value_name = "T")]
    steps: Option<usize>,
    /// Output CSV; defaults to `<weights>.replay.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long = "T", value_name = "T", default_value_t = 10)]
    steps: usize,
    #[arg(long = "K", value_name = "K", default_value_t = 6)]
    horizon: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Clip F to the admissible norm before checking.
    #[arg(long)]
    clip: bool,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    eps0: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long = "T", value_name = "T")]
    steps: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
}

fn parse_state_update(s: &str) -> Result<StateUpdate, String> {
    if s == "rollout" {
        return Ok(StateUpdate::Rollout);
    }
    match s.strip_prefix("smooth:").map(str::parse::<usize>) {
        Some(Ok(j)) if j >= 1 => Ok(StateUpdate::Smooth(j)),
        _ => Err(format!("expected `rollout` or `smooth:J` with J >= 1, got {s:?}")),
    }
}

/// A failure tagged with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidHyperparameter(_) | Error::Argument(_) => EXIT_USAGE,
            Error::Numeric { .. } | Error::NonFinite(_) => EXIT_NUMERIC,
            Error::Shape(_)
            | Error::OutOfRange(_)
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Format(_)
            | Error::Io { .. } => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

struct Ctx<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.out, "{key}={value}");
    }

    fn warn(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.err, "warning: {msg}");
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    let mut ctx = Ctx { out, err };
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Replay(a) => cmd_replay(&mut ctx, a),
        Command::Gradcheck(a) => cmd_gradcheck(&mut ctx, a),
        Command::Bound(a) => cmd_bound(&mut ctx, a),
        Command::Compare(a) => cmd_compare(&mut ctx, a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(ctx.err, "error: {}", f.message);
            if f.code == EXIT_USAGE {
                let _ = writeln!(ctx.err, "run `piranha --help` for usage");
            }
            f.code
        }
    }
}

fn cmd_gen_data(ctx: &mut Ctx<'_>, a: GenDataArgs) -> CmdResult {
    let kind = match a.kind {
        Kind::Sine => SeriesKind::Sine {
            freq: a.freq,
            phase: a.phase,
        },
        Kind::Square => SeriesKind::Square { freq: a.freq },
        Kind::Sines => {
            let spec = a
                .components
                .as_deref()
                .ok_or_else(|| Failure::usage("--kind sines requires --components amp:freq:phase,..."))?;
            SeriesKind::SumOfSines(parse_components(spec).map_err(Failure::usage)?)
        }
    };
    let series: Series<f64> = gen_series(&kind, a.len, a.m, a.seed)?;
    io::save_series(&series, &a.out)?;
    ctx.kv("path", a.out.display());
    ctx.kv("len", series.len());
    ctx.kv("m", series.dim());
    Ok(EXIT_OK)
}

fn parse_components(spec: &str) -> Result<Vec<SineComponent>, String> {
    spec.split(',')
        .map(|part| {
            let f: Vec<f64> = part
                .split(':')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad component {part:?}"))
                })
                .collect::<Result<_, _>>()?;
            match f.as_slice() {
                [amplitude, freq, phase] => Ok(SineComponent {
                    amplitude: *amplitude,
                    freq: *freq,
                    phase: *phase,
                }),
                [amplitude, freq] => Ok(SineComponent {
                    amplitude: *amplitude,
                    freq: *freq,
                    phase: 0.0,
                }),
                _ => Err(format!("component {part:?} is not amp:freq[:phase]")),
            }
        })
        .collect()
}

/// Flags of `train`/`compare` after validation, before touching any data.
struct Plan {
    hp: Hyperparams<f64>,
    cfg: TrainConfig<f64>,
    k_source: &'static str,
    bound: Option<TruncationReport>,
}

fn plan_training(ctx: &mut Ctx<'_>, a: &TrainArgs) -> Result<Plan, Failure> {
    if a.gamma == 0.0 {
        return Err(Failure::usage(
            "gamma = 0 is rejected for training: every weight-dependent term of the improvement \
             objective carries a factor gamma^k with k >= 1, so the gradient vanishes identically",
        ));
    }
    if !(0.0..1.0).contains(&a.gamma) {
        return Err(Failure::usage(format!(
            "--gamma must lie in (0, 1), got {}",
            a.gamma
        )));
    }
    if let Some(m) = a.m {
        if m == 0 || a.n <= m {
            return Err(Failure::usage(format!(
                "need --n > --m >= 1, got n={} m={m}",
                a.n
            )));
        }
    } else if a.n < 2 {
        return Err(Failure::usage("--n must be at least 2"));
    }
    if a.steps == 0 {
        return Err(Failure::usage("--T must be >= 1"));
    }
    let (horizon, k_source, bound) = match (a.horizon, a.eps0) {
        (Some(k), Some(_)) => {
            ctx.warn("both --K and --eps0 given; using the explicit --K");
            (k, "explicit", None)
        }
        (Some(k), None) => (k, "explicit", None),
        (None, Some(eps0)) => {
            // The bound depends on m; without --m assume the smallest network input.
            let shape = Shape::new(a.m.unwrap_or(1), a.n).map_err(|e| Failure::usage(e.to_string()))?;
            let report = truncation_horizon(eps0, a.gamma, a.steps, shape)
                .map_err(|e| Failure::usage(e.to_string()))?;
            (report.horizon, "eps0", Some(report))
        }
        (None, None) => return Err(Failure::usage("one of --K or --eps0 is required")),
    };
    let hp = Hyperparams::new(a.gamma, horizon, a.steps).map_err(|e| Failure::usage(e.to_string()))?;
    let step = if a.fixed_step {
        StepPolicy::Fixed { alpha: a.alpha }
    } else {
        StepPolicy::Backtracking {
            alpha_init: a.alpha,
            shrink: a.shrink,
            max_halvings: a.max_halvings,
        }
    };
    let cfg = TrainConfig {
        hp,
        max_iter: a.max_iter,
        step,
        clip: !a.no_clip,
        state_update: a.state_update,
        seed: a.seed,
        stop_tol: a.stop_tol,
        record_timing: a.timing,
    };
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(Plan {
        hp,
        cfg,
        k_source,
        bound,
    })
}

fn load_training_series(a: &TrainArgs) -> Result<(Series<f64>, Shape), Failure> {
    let series: Series<f64> = io::load_series(&a.data, a.m)?;
    let series = series.with_pad(match a.pad {
        Pad::None => PadMode::None,
        Pad::Hold => PadMode::Hold,
    });
    let shape = Shape::new(series.dim(), a.n).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: format!("{e} (series has {} channels)", series.dim()),
    })?;
    Ok((series, shape))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| {
        Failure::from(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn config_pairs(
    a: &TrainArgs,
    plan: &Plan,
    shape: Shape,
    series: &Series<f64>,
) -> Vec<(&'static str, String)> {
    let cfg = &plan.cfg;
    let mut pairs = vec![
        ("data", a.data.display().to_string()),
        ("samples", series.len().to_string()),
        ("m", shape.m().to_string()),
        ("n", shape.n().to_string()),
        ("gamma", format!("{:e}", plan.hp.gamma())),
        ("K", plan.hp.horizon().to_string()),
        ("K_source", plan.k_source.to_string()),
        ("T", plan.hp.steps().to_string()),
    ];
    if let Some(b) = plan.bound {
        pairs.push(("eps0", format!("{:e}", a.eps0.unwrap_or_default())));
        pairs.push(("bound", format!("{:e}", b.bound)));
    }
    match cfg.step {
        StepPolicy::Fixed { alpha } => {
            pairs.push(("step_policy", "fixed".into()));
            pairs.push(("alpha", format!("{alpha:e}")));
        }
        StepPolicy::Backtracking {
            alpha_init,
            shrink,
            max_halvings,
        } => {
            pairs.push(("step_policy", "backtracking".into()));
            pairs.push(("alpha", format!("{alpha_init:e}")));
            pairs.push(("shrink", format!("{shrink:e}")));
            pairs.push(("max_halvings", max_halvings.to_string()));
        }
    }
    pairs.extend([
        ("max_iter", cfg.max_iter.to_string()),
        ("clip", cfg.clip.to_string()),
        ("state_update", cfg.state_update.to_string()),
        ("seed", cfg.seed.to_string()),
        ("stop_tol", format!("{:e}", cfg.stop_tol)),
        ("pad", format!("{:?}", a.pad).to_lowercase()),
        ("squash", Squash::<f64>::name(&Tanh).to_string()),
    ]);
    pairs
}

fn cmd_train(ctx: &mut Ctx<'_>, a: TrainArgs) -> CmdResult {
    let plan = plan_training(ctx, &a)?;
    let (series, shape) = load_training_series(&a)?;
    for w in Squash::<f64>::assumption_warnings(&Tanh) {
        ctx.warn(w);
    }
    let (result, trace) = piranha_train(&series, shape, &plan.cfg, None, &Tanh)?;
    create_dir(&a.out)?;
    io::save_weights(&result.weights, &a.out.join("weights.txt"))?;
    io::write_trace(&trace, &a.out.join("trace.csv"))?;
    io::write_key_values(
        &config_pairs(&a, &plan, shape, &series),
        &a.out.join("config.txt"),
    )?;
    ctx.kv("initial_objective", format!("{:e}", result.initial_objective));
    ctx.kv("final_objective", format!("{:e}", result.objective));
    ctx.kv("termination", result.termination);
    ctx.kv("steps", result.steps);
    ctx.kv("K", plan.hp.horizon());
    ctx.kv("out", a.out.display());
    Ok(EXIT_OK)
}

fn cmd_compare(ctx: &mut Ctx<'_>, a: TrainArgs) -> CmdResult {
    let plan = plan_training(ctx, &a)?;
    let (series, shape) = load_training_series(&a)?;
    let steps = plan.hp.steps();
    if steps < 2 {
        return Err(Failure::usage(
            "compare needs --T >= 2 to place the replay switch",
        ));
    }
    let w0 = initial_weights(shape, plan.cfg.seed);
    let (pi, pi_trace) = piranha_train(&series, shape, &plan.cfg, Some(w0.clone()), &Tanh)?;
    let (bl, bl_trace) = baseline_onestep_train(&series, shape, &plan.cfg, Some(w0.clone()), &Tanh)?;
    let t_switch = (steps / 2).max(1);
    let replay_of = |w: &Weights<f64>| replay(w, &series, t_switch, steps, &Tanh).map(|r| r.error);
    let initial_replay = replay_of(&w0)?;
    let pi_replay = replay_of(&pi.weights)?;
    let bl_replay = replay_of(&bl.weights)?;

    create_dir(&a.out)?;
    io::save_weights(&pi.weights, &a.out.join("piranha_weights.txt"))?;
    io::save_weights(&bl.weights, &a.out.join("baseline_weights.txt"))?;
    io::write_trace(&pi_trace, &a.out.join("piranha_trace.csv"))?;
    io::write_trace(&bl_trace, &a.out.join("baseline_trace.csv"))?;
    io::write_key_values(
        &config_pairs(&a, &plan, shape, &series),
        &a.out.join("config.txt"),
    )?;
    let summary = vec![
        ("t_switch", t_switch.to_string()),
        ("T", steps.to_string()),
        ("initial_replay_error", format!("{initial_replay:e}")),
        ("piranha_replay_error", format!("{pi_replay:e}")),
        ("baseline_replay_error", format!("{bl_replay:e}")),
        ("piranha_objective", format!("{:e}", pi.objective)),
        ("piranha_termination", pi.termination.to_string()),
        ("baseline_objective", format!("{:e}", bl.objective)),
        ("baseline_termination", bl.termination.to_string()),
    ];
    io::write_key_values(&summary, &a.out.join("summary.txt"))?;
    for (k, v) in &summary {
        ctx.kv(k, v);
    }
    ctx.kv("out", a.out.display());
    Ok(EXIT_OK)
}

fn cmd_replay(ctx: &mut Ctx<'_>, a: ReplayArgs) -> CmdResult {
    let weights: Weights<f64> = io::load_weights(&a.weights)?;
    let series: Series<f64> = io::load_series(&a.data, Some(weights.shape().m()))?;
    let steps = a.steps.unwrap_or(series.len() - 1);
    if a.t_switch < 1 || a.t_switch >= steps {
        return Err(Failure::usage(format!(
            "--t-switch must satisfy 1 <= t-switch < T, got {} with T={steps}",
            a.t_switch
        )));
    }
    let result = replay(&weights, &series, a.t_switch, steps, &Tanh)?;
    let out = a.out.unwrap_or_else(|| {
        let mut p = a.weights.clone().into_os_string();
        p.push(".replay.csv");
        PathBuf::from(p)
    });
    io::write_replay(&series, &result.predictions, &out)?;
    ctx.kv("replay_error", format!("{:e}", result.error));
    ctx.kv("t_switch", a.t_switch);
    ctx.kv("T", steps);
    ctx.kv("out", out.display());
    Ok(EXIT_OK)
}

fn cmd_gradcheck(ctx: &mut Ctx<'_>, a: GradcheckArgs) -> CmdResult {
    let shape = Shape::new(a.m, a.n).map_err(|e| Failure::usage(e.to_string()))?;
    let hp = Hyperparams::new(a.gamma, a.horizon, a.steps).map_err(|e| Failure::usage(e.to_string()))?;
    if !(a.h > 0.0) {
        return Err(Failure::usage(format!("--h must be > 0, got {}", a.h)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut w = Weights::random_uniform(shape, 1.0, &mut rng);
    let xs: Vec<Vec<f64>> = (0..hp.required_len())
        .map(|_| (0..a.m).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let x = Series::from_normalized(xs)?;
    if a.clip {
        w = Weights::new(clip_recurrent(w.f(), a.gamma), w.g().clone())?;
    }
    let limit = if a.gamma > 0.0 {
        1.0 / a.gamma.sqrt()
    } else {
        f64::INFINITY
    };
    let f_norm = w.f().norm_inf();
    if f_norm > limit {
        ctx.warn(format!(
            "||F||_inf = {f_norm:.4} exceeds 1/sqrt(gamma) = {limit:.4}; the truncation bound assumption is violated"
        ));
    }
    let seq = rollout(&w, &x, hp.steps(), &Tanh)?;
    let analytic = grad(&w, &seq, &x, &hp, &Tanh)?;
    let numeric = fd_grad(&w, &seq, &x, &hp, a.h, &Tanh)?;
    let err = max_relative_error(&analytic, &numeric, 1e-10);
    let pass = err <= a.tol;
    ctx.kv("max_rel_error", format!("{err:e}"));
    ctx.kv("grad_norm", format!("{:e}", analytic.norm()));
    ctx.kv("f_norm_inf", format!("{f_norm:e}"));
    ctx.kv("tolerance", format!("{:e}", a.tol));
    ctx.kv("pass", pass);
    Ok(if pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_bound(ctx: &mut Ctx<'_>, a: BoundArgs) -> CmdResult {
    let shape = Shape::new(a.m, a.n).map_err(|e| Failure::usage(e.to_string()))?;
    let r = truncation_horizon(a.eps0, a.gamma, a.steps, shape).map_err(|e| Failure::usage(e.to_string()))?;
    ctx.kv("K", r.horizon);
    ctx.kv("bound", format!("{:e}", r.bound));
    ctx.kv("C0", format!("{:e}", r.c0));
    ctx.kv("C1", format!("{:e}", r.c1));
    Ok(EXIT_OK)
}
