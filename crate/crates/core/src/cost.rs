//! Immediate reconstruction cost, the K-truncated discounted multi-step cost,
//! and the improvement objective descended by the training loop.
//!
//! Sums run over transition indices `t = 0..T-1`; the state `u_t` is
//! compared with `x_t`, and its k-step propagation with `x_{t+k}`.

use crate::error::{Error, Result};
use crate::net::{preactivation, HiddenState, Squash, StateSeq, Weights};
use crate::scalar::Scalar;
use crate::series::Series;

/// Discount `γ`, truncation horizon `K` and sequence length `T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparams<S> {
    gamma: S,
    horizon: usize,
    steps: usize,
}

impl<S: Scalar> Hyperparams<S> {
    pub fn new(gamma: S, horizon: usize, steps: usize) -> Result<Self> {
        if !(gamma >= S::zero() && gamma < S::one()) {
            return Err(Error::InvalidHyperparameter(format!(
                "discount must satisfy 0 <= gamma < 1, got {gamma}"
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidHyperparameter("horizon K must be >= 1".into()));
        }
        if steps == 0 {
            return Err(Error::InvalidHyperparameter(
                "sequence length T must be >= 1".into(),
            ));
        }
        Ok(Self {
            gamma,
            horizon,
            steps,
        })
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(self.gamma, horizon, self.steps)
    }

    /// Training needs `γ > 0`: every candidate-dependent term of the
    /// improvement objective carries a factor `γ^k` with `k >= 1`.
    pub fn check_trainable(&self) -> Result<()> {
        if self.gamma == S::zero() {
            return Err(Error::InvalidHyperparameter(
                "gamma = 0 makes the improvement objective independent of the weights \
                 (all multi-step terms vanish, so the gradient is identically zero); \
                 use gamma > 0 for training"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Number of series samples the costs read: `T + K`.
    pub fn required_len(&self) -> usize {
        self.steps + self.horizon
    }
}

/// Discounted cost split by prediction horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct CostBreakdown<S> {
    pub total: S,
    /// `γ^k Σ_t ‖·‖²` for `k = 0..=K`.
    pub per_horizon: Vec<S>,
}

pub(crate) fn sq_err<S: Scalar>(u: &[S], target: &[S]) -> S {
    u.iter().zip(target).fold(S::zero(), |acc, (a, b)| {
        let d = *a - *b;
        acc + d * d
    })
}

fn check_seq<S: Scalar>(w: &Weights<S>, seq: &StateSeq<S>, hp: &Hyperparams<S>) -> Result<()> {
    if seq.steps() != hp.steps {
        return Err(Error::Shape(format!(
            "state sequence covers T={} steps, hyperparameters say T={}",
            seq.steps(),
            hp.steps
        )));
    }
    if seq.dim() != w.shape().n() {
        return Err(Error::Shape(format!(
            "state dimension {} does not match n={}",
            seq.dim(),
            w.shape().n()
        )));
    }
    Ok(())
}

/// `c(U) = Σ_{t=0}^{T-1} ‖H u_t − x_t‖²`.
pub fn immediate_cost<S: Scalar>(seq: &StateSeq<S>, x: &Series<S>) -> Result<S> {
    let m = x.dim();
    if m >= seq.dim() {
        return Err(Error::Shape(format!(
            "series has {m} channels but states only {} components",
            seq.dim()
        )));
    }
    x.require(seq.steps())?;
    let mut total = S::zero();
    for t in 0..seq.steps() {
        total += sq_err(&seq[t][..m], x.at(t)?);
    }
    Ok(total)
}

/// Undiscounted error sums `Σ_t ‖H s^(k)(u_t) − x_{t+k}‖²` for `k = 1..=K`,
/// where the first step uses `first` and later steps free-run with `rest`.
fn horizon_sums<S: Scalar, A: Squash<S>>(
    first: &Weights<S>,
    rest: &Weights<S>,
    seq: &StateSeq<S>,
    x: &Series<S>,
    hp: &Hyperparams<S>,
    act: &A,
) -> Result<Vec<S>> {
    let shape = first.shape();
    if rest.shape() != shape {
        return Err(Error::Shape(
            "candidate and evaluation weights differ in shape".into(),
        ));
    }
    if x.dim() != shape.m() {
        return Err(Error::Shape(format!(
            "series has {} channels, weights expect m={}",
            x.dim(),
            shape.m()
        )));
    }
    check_seq(first, seq, hp)?;
    x.require(hp.required_len())?;
    let (m, n) = (shape.m(), shape.n());
    let mut sums = vec![S::zero(); hp.horizon];
    let mut z = vec![S::zero(); n];
    let mut a = HiddenState::zeros(n);
    for t in 0..hp.steps {
        preactivation(first, &seq[t], x.at(t)?, &mut z);
        for (ai, zi) in a.0.iter_mut().zip(&z) {
            *ai = act.value(*zi);
        }
        sums[0] += sq_err(&a[..m], x.at(t + 1)?);
        for k in 2..=hp.horizon {
            preactivation(rest, &a, &a[..m], &mut z);
            for (ai, zi) in a.0.iter_mut().zip(&z) {
                *ai = act.value(*zi);
            }
            sums[k - 1] += sq_err(&a[..m], x.at(t + k)?);
        }
    }
    Ok(sums)
}

/// `Σ_{k=0}^{K} γ^k Σ_t ‖H s^(k)_{t,w}(u_t) − x_{t+k}‖²`.
pub fn discounted_cost<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    seq: &StateSeq<S>,
    x: &Series<S>,
    hp: &Hyperparams<S>,
    act: &A,
) -> Result<CostBreakdown<S>> {
    let sums = horizon_sums(w, w, seq, x, hp, act)?;
    let mut per_horizon = Vec::with_capacity(hp.horizon + 1);
    per_horizon.push(immediate_cost(seq, x)?);
    for (k, s) in sums.into_iter().enumerate() {
        per_horizon.push(hp.gamma.powi(k as i32 + 1) * s);
    }
    let total = per_horizon.iter().fold(S::zero(), |acc, v| acc + *v);
    Ok(CostBreakdown { total, per_horizon })
}

/// `c(U) + Σ_t Σ_{k=1}^{K} γ^k ‖e_{t,k}‖²`, where `e_{t,k}` propagates `u_t`
/// one step with the candidate weights and `k-1` further steps with the
/// evaluation weights.
pub fn improvement_objective<S: Scalar, A: Squash<S>>(
    w_cand: &Weights<S>,
    w_eval: &Weights<S>,
    seq: &StateSeq<S>,
    x: &Series<S>,
    hp: &Hyperparams<S>,
    act: &A,
) -> Result<S> {
    let sums = horizon_sums(w_cand, w_eval, seq, x, hp, act)?;
    let mut total = immediate_cost(seq, x)?;
    for (k, s) in sums.into_iter().enumerate() {
        total += hp.gamma.powi(k as i32 + 1) * s;
    }
    Ok(total)
}
