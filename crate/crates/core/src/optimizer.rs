//! The training loop: policy evaluation (rollout of the current weights),
//! policy improvement (a step along the improvement-objective gradient),
//! backtracking line search on the re-rolled discounted cost, and optional
//! clipping of the recurrent weights.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{discounted_cost, Hyperparams};
use crate::error::{Error, Result};
use crate::gradient::{grad, Gradient};
use crate::linalg::Matrix;
use crate::net::{apply_s, rollout, Shape, Squash, StateSeq, Weights};
use crate::scalar::Scalar;
use crate::series::Series;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepPolicy<S> {
    Fixed {
        alpha: S,
    },
    /// Try `alpha_init · shrink^j` for `j = 0..=max_halvings`; take the first
    /// step that strictly lowers the objective.
    Backtracking {
        alpha_init: S,
        shrink: S,
        max_halvings: usize,
    },
}

impl<S: Scalar> StepPolicy<S> {
    pub fn backtracking(alpha_init: S) -> Self {
        StepPolicy::Backtracking {
            alpha_init,
            shrink: S::lit(0.5),
            max_halvings: 40,
        }
    }
}

/// How the state sequence used for the gradient is refreshed each iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateUpdate {
    /// `U := rollout(w)`.
    Rollout,
    /// `U := S_w^j U`, starting from the all-zero sequence.
    Smooth(usize),
}

impl fmt::Display for StateUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateUpdate::Rollout => write!(f, "rollout"),
            StateUpdate::Smooth(j) => write!(f, "smooth:{j}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<S> {
    pub hp: Hyperparams<S>,
    pub max_iter: usize,
    pub step: StepPolicy<S>,
    pub clip: bool,
    pub state_update: StateUpdate,
    pub seed: u64,
    /// Stop once the gradient norm drops below this.
    pub stop_tol: S,
    /// Fill the `ms` trace column. Off by default so traces are reproducible.
    pub record_timing: bool,
}

impl<S: Scalar> TrainConfig<S> {
    pub fn new(hp: Hyperparams<S>) -> Self {
        Self {
            hp,
            max_iter: 1000,
            step: StepPolicy::backtracking(S::lit(0.1)),
            clip: true,
            state_update: StateUpdate::Rollout,
            seed: 0,
            stop_tol: S::lit(1e-8),
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidHyperparameter("max_iter must be >= 1".into()));
        }
        match self.step {
            StepPolicy::Fixed { alpha } if !(alpha > S::zero()) => Err(Error::InvalidHyperparameter(
                format!("step size must be > 0, got {alpha}"),
            )),
            StepPolicy::Backtracking { alpha_init, .. } if !(alpha_init > S::zero()) => Err(
                Error::InvalidHyperparameter(format!("initial step size must be > 0, got {alpha_init}")),
            ),
            StepPolicy::Backtracking { shrink, .. } if !(shrink > S::zero() && shrink < S::one()) => Err(
                Error::InvalidHyperparameter(format!("shrink factor must lie in (0, 1), got {shrink}")),
            ),
            _ => Ok(()),
        }?;
        if let StateUpdate::Smooth(0) = self.state_update {
            return Err(Error::InvalidHyperparameter("smooth:J needs J >= 1".into()));
        }
        if !(self.stop_tol >= S::zero()) {
            return Err(Error::InvalidHyperparameter("stop tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// One trace row, describing the weights at the start of iteration `iter`.
///
/// `alpha` is the step taken from these weights (0 on the final row).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow<S> {
    pub iter: usize,
    pub objective: S,
    pub grad_norm: S,
    pub alpha: S,
    pub f_norm_inf: S,
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace<S> {
    pub rows: Vec<TraceRow<S>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    MaxIter,
    GradientBelowTol,
    LineSearchFailed,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::MaxIter => "max_iter",
            Termination::GradientBelowTol => "gradient_below_tol",
            Termination::LineSearchFailed => "line_search_failed",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult<S> {
    pub weights: Weights<S>,
    pub initial_objective: S,
    /// Objective of `weights`; equal to the last trace row.
    pub objective: S,
    pub termination: Termination,
    /// Number of accepted steps.
    pub steps: usize,
}

/// Rescales every row of `F` whose absolute sum exceeds `1/√γ` down to that limit.
pub fn clip_recurrent<S: Scalar>(f: &Matrix<S>, gamma: S) -> Matrix<S> {
    if !(gamma > S::zero()) {
        return f.clone();
    }
    let limit = S::one() / gamma.sqrt();
    let mut out = f.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let sum = row.iter().fold(S::zero(), |acc, v| acc + v.abs());
        if sum > limit {
            let scale = limit / sum;
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
    out
}

/// Discounted cost of `w` at its own rollout, `J_K(w) = Ĵ(rollout(w), w)`.
pub fn policy_cost<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    x: &Series<S>,
    hp: &Hyperparams<S>,
    act: &A,
) -> Result<S> {
    let seq = rollout(w, x, hp.steps(), act)?;
    Ok(discounted_cost(w, &seq, x, hp, act)?.total)
}

#[derive(Clone, Debug, PartialEq)]
pub enum LineSearch<S> {
    Accepted {
        alpha: S,
        weights: Weights<S>,
        objective: S,
    },
    Failed,
}

fn apply_clip<S: Scalar>(w: Weights<S>, clip_gamma: Option<S>) -> Weights<S> {
    match clip_gamma {
        Some(gamma) => {
            let (f, g) = w.into_parts();
            Weights::new(clip_recurrent(&f, gamma), g).expect("clipping keeps weights valid")
        }
        None => w,
    }
}

/// Backtracking over `alpha_init · shrink^j` on an arbitrary objective.
fn backtrack<S, J>(
    w: &Weights<S>,
    d: &Gradient<S>,
    current: S,
    (alpha_init, shrink, max_halvings): (S, S, usize),
    clip_gamma: Option<S>,
    mut objective: J,
) -> Result<LineSearch<S>>
where
    S: Scalar,
    J: FnMut(&Weights<S>) -> Result<S>,
{
    let mut alpha = alpha_init;
    for _ in 0..=max_halvings {
        if let Ok(cand) = d.descend(w, alpha) {
            let cand = apply_clip(cand, clip_gamma);
            let value = objective(&cand)?;
            if value < current {
                return Ok(LineSearch::Accepted {
                    alpha,
                    weights: cand,
                    objective: value,
                });
            }
        }
        alpha *= shrink;
    }
    Ok(LineSearch::Failed)
}

/// Largest `α = α_init·ρ^j` (`j <= max_halvings`) for which the re-rolled cost
/// `J_K(w − α·d)`, clipped when enabled, is strictly below `current = J_K(w)`.
///
/// A fixed-step policy skips the search and always takes `α`.
pub fn line_search<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    d: &Gradient<S>,
    current: S,
    x: &Series<S>,
    cfg: &TrainConfig<S>,
    act: &A,
) -> Result<LineSearch<S>> {
    let clip_gamma = cfg.clip.then(|| cfg.hp.gamma());
    match cfg.step {
        StepPolicy::Fixed { alpha } => {
            let weights = apply_clip(d.descend(w, alpha)?, clip_gamma);
            let objective = policy_cost(&weights, x, &cfg.hp, act)?;
            Ok(LineSearch::Accepted {
                alpha,
                weights,
                objective,
            })
        }
        StepPolicy::Backtracking {
            alpha_init,
            shrink,
            max_halvings,
        } => backtrack(
            w,
            d,
            current,
            (alpha_init, shrink, max_halvings),
            clip_gamma,
            |cand| policy_cost(cand, x, &cfg.hp, act),
        ),
    }
}

/// Default initialization: uniform in `[-r, r]` with `r = 0.1/√n`, seeded.
pub fn initial_weights<S: Scalar>(shape: Shape, seed: u64) -> Weights<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = S::lit(0.1) / S::lit(shape.n() as f64).sqrt();
    Weights::random_uniform(shape, r, &mut rng)
}

fn at_iteration(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(detail) => Error::Numeric { iteration, detail },
        other => other,
    }
}

/// Shared descent driver: `objective` scores weights for the trace and the
/// line search; `gradient` produces the search direction at the current weights.
pub(crate) fn descend<S, J, G>(
    cfg: &TrainConfig<S>,
    w0: Weights<S>,
    mut objective: J,
    mut gradient: G,
) -> Result<(TrainResult<S>, TrainTrace<S>)>
where
    S: Scalar,
    J: FnMut(&Weights<S>) -> Result<S>,
    G: FnMut(&Weights<S>) -> Result<Gradient<S>>,
{
    cfg.validate()?;
    let clip_gamma = cfg.clip.then(|| cfg.hp.gamma());
    let start = Instant::now();
    let mut w = apply_clip(w0, clip_gamma);
    let mut current = objective(&w).map_err(at_iteration(0))?;
    let initial_objective = current;
    let mut trace = TrainTrace::default();
    let mut iter = 0;

    let termination = loop {
        let check = at_iteration(iter);
        if !current.is_finite() {
            return Err(check(Error::NonFinite(format!("objective is {current}"))));
        }
        let g = gradient(&w).map_err(&check)?;
        let grad_norm = g.norm();
        let mut row = TraceRow {
            iter,
            objective: current,
            grad_norm,
            alpha: S::zero(),
            f_norm_inf: w.f().norm_inf(),
            ms: 0.0,
        };
        let stamp = |row: &mut TraceRow<S>| {
            if cfg.record_timing {
                row.ms = start.elapsed().as_secs_f64() * 1e3;
            }
        };
        if grad_norm < cfg.stop_tol {
            stamp(&mut row);
            trace.rows.push(row);
            break Termination::GradientBelowTol;
        }
        if iter == cfg.max_iter {
            stamp(&mut row);
            trace.rows.push(row);
            break Termination::MaxIter;
        }
        let outcome = match cfg.step {
            StepPolicy::Fixed { alpha } => {
                let weights = apply_clip(g.descend(&w, alpha).map_err(&check)?, clip_gamma);
                let value = objective(&weights).map_err(&check)?;
                LineSearch::Accepted {
                    alpha,
                    weights,
                    objective: value,
                }
            }
            StepPolicy::Backtracking {
                alpha_init,
                shrink,
                max_halvings,
            } => backtrack(
                &w,
                &g,
                current,
                (alpha_init, shrink, max_halvings),
                clip_gamma,
                &mut objective,
            )
            .map_err(&check)?,
        };
        match outcome {
            LineSearch::Accepted {
                alpha,
                weights,
                objective: value,
            } => {
                row.alpha = alpha;
                stamp(&mut row);
                trace.rows.push(row);
                w = weights;
                current = value;
                iter += 1;
            }
            LineSearch::Failed => {
                stamp(&mut row);
                trace.rows.push(row);
                break Termination::LineSearchFailed;
            }
        }
    };

    Ok((
        TrainResult {
            weights: w,
            initial_objective,
            objective: current,
            termination,
            steps: iter,
        },
        trace,
    ))
}

/// Trains `(F, G)` by policy iteration on the truncated discounted cost.
///
/// Each iteration evaluates the current weights (refreshing the state
/// sequence), takes a step along the improvement-objective gradient, and
/// records a trace row. Without `w0` the weights start from
/// [`initial_weights`] seeded with `cfg.seed`.
pub fn piranha_train<S: Scalar, A: Squash<S>>(
    x: &Series<S>,
    shape: Shape,
    cfg: &TrainConfig<S>,
    w0: Option<Weights<S>>,
    act: &A,
) -> Result<(TrainResult<S>, TrainTrace<S>)> {
    cfg.validate()?;
    cfg.hp.check_trainable()?;
    check_series(x, shape, cfg.hp.required_len())?;
    let w0 = prepare_start(shape, cfg, w0)?;
    let hp = cfg.hp;
    let mut seq = StateSeq::zeros(shape.n(), hp.steps());
    descend(
        cfg,
        w0,
        |w| policy_cost(w, x, &hp, act),
        |w| {
            seq = match cfg.state_update {
                StateUpdate::Rollout => rollout(w, x, hp.steps(), act)?,
                StateUpdate::Smooth(j) => {
                    let mut s = seq.clone();
                    for _ in 0..j {
                        s = apply_s(w, &s, x, act)?;
                    }
                    s
                }
            };
            grad(w, &seq, x, &hp, act)
        },
    )
}

pub(crate) fn check_series<S: Scalar>(x: &Series<S>, shape: Shape, needed: usize) -> Result<()> {
    if x.dim() != shape.m() {
        return Err(Error::Shape(format!(
            "series has {} channels, network expects m={}",
            x.dim(),
            shape.m()
        )));
    }
    x.require(needed)
}

pub(crate) fn prepare_start<S: Scalar>(
    shape: Shape,
    cfg: &TrainConfig<S>,
    w0: Option<Weights<S>>,
) -> Result<Weights<S>> {
    match w0 {
        Some(w) if w.shape() != shape => Err(Error::Shape(format!(
            "initial weights have shape {:?}, expected {:?}",
            w.shape(),
            shape
        ))),
        Some(w) => Ok(w),
        None => Ok(initial_weights(shape, cfg.seed)),
    }
}
