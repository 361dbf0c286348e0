//! Iterated one-step baseline: gradient descent on the teacher-forced
//! one-step prediction error, backpropagated through the rollout.

use crate::cost::sq_err;
use crate::error::{Error, Result};
use crate::gradient::Gradient;
use crate::net::{preactivation, Shape, Squash, Weights};
use crate::optimizer::{check_series, descend, prepare_start, TrainConfig, TrainResult, TrainTrace};
use crate::scalar::Scalar;
use crate::series::Series;

/// `Σ_{t=0}^{T-1} ‖H·u_{t+1} − x_{t+1}‖²` with `u` the teacher-forced rollout of `w`.
pub fn onestep_objective<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    x: &Series<S>,
    steps: usize,
    act: &A,
) -> Result<S> {
    let (m, n) = (w.shape().m(), w.shape().n());
    x.require(steps + 1)?;
    let mut u = vec![S::zero(); n];
    let mut z = vec![S::zero(); n];
    let mut total = S::zero();
    for t in 0..steps {
        preactivation(w, &u, x.at(t)?, &mut z);
        for (ui, zi) in u.iter_mut().zip(&z) {
            *ui = act.value(*zi);
        }
        total += sq_err(&u[..m], x.at(t + 1)?);
    }
    Ok(total)
}

/// Exact gradient of [`onestep_objective`], including the dependence of every
/// state on earlier weights (backpropagation through time).
pub fn onestep_gradient<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    x: &Series<S>,
    steps: usize,
    act: &A,
) -> Result<Gradient<S>> {
    let shape = w.shape();
    let (m, n) = (shape.m(), shape.n());
    x.require(steps + 1)?;
    let mut states = vec![vec![S::zero(); n]; steps + 1];
    let mut pre = vec![vec![S::zero(); n]; steps];
    for t in 0..steps {
        let (done, rest) = states.split_at_mut(t + 1);
        preactivation(w, &done[t], x.at(t)?, &mut pre[t]);
        for (ui, zi) in rest[0].iter_mut().zip(&pre[t]) {
            *ui = act.value(*zi);
        }
    }

    let two = S::lit(2.0);
    let mut out = Gradient::zeros(shape);
    let mut carry = vec![S::zero(); n];
    let mut g_z = vec![S::zero(); n];
    for t in (0..steps).rev() {
        let target = x.at(t + 1)?;
        for c in 0..m {
            carry[c] += two * (states[t + 1][c] - target[c]);
        }
        for ((gz, ga), z) in g_z.iter_mut().zip(&carry).zip(&pre[t]) {
            *gz = *ga * act.derivative(*z);
        }
        let x_t = x.at(t)?;
        out.df.add_outer(&g_z, &states[t]);
        out.dg.add_outer(&g_z, x_t);
        for (r, gz) in g_z.iter().enumerate() {
            out.dg[(r, m)] += *gz;
        }
        carry.iter_mut().for_each(|v| *v = S::zero());
        w.f().tr_mul_vec_acc(&g_z, &mut carry);
    }
    if !out.is_finite() {
        return Err(Error::NonFinite(
            "one-step gradient has non-finite entries".into(),
        ));
    }
    Ok(out)
}

/// Gradient descent on [`onestep_objective`] with the same step policy,
/// clipping, seeding and trace format as the policy-iteration trainer.
/// The discount and horizon in `cfg.hp` are ignored.
pub fn baseline_onestep_train<S: Scalar, A: Squash<S>>(
    x: &Series<S>,
    shape: Shape,
    cfg: &TrainConfig<S>,
    w0: Option<Weights<S>>,
    act: &A,
) -> Result<(TrainResult<S>, TrainTrace<S>)> {
    cfg.validate()?;
    let steps = cfg.hp.steps();
    check_series(x, shape, steps + 1)?;
    let w0 = prepare_start(shape, cfg, w0)?;
    descend(
        cfg,
        w0,
        |w| onestep_objective(w, x, steps, act),
        |w| onestep_gradient(w, x, steps, act),
    )
}
