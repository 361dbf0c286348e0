//! Sequence replay from a teacher-forced prefix.

use crate::cost::sq_err;
use crate::error::{Error, Result};
use crate::net::{step, Squash, Weights};
use crate::scalar::Scalar;
use crate::series::Series;

#[derive(Clone, Debug, PartialEq)]
pub struct Replay<S> {
    /// Predictions `x̂_0..x̂_T` (normalized); `x̂_0 = H·u_0 = 0`.
    pub predictions: Vec<Vec<S>>,
    /// `Σ_{t'=t_switch}^{T} ‖x̂_{t'} − x_{t'}‖²`.
    pub error: S,
}

/// Feeds `v_t = x_t` for `t <= t_switch` and `v_t = x̂_t` afterwards.
pub fn replay<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    x: &Series<S>,
    t_switch: usize,
    steps: usize,
    act: &A,
) -> Result<Replay<S>> {
    if t_switch < 1 || t_switch >= steps {
        return Err(Error::Argument(format!(
            "switch time must satisfy 1 <= t_switch < T, got t_switch={t_switch} T={steps}"
        )));
    }
    let m = w.shape().m();
    if x.dim() != m {
        return Err(Error::Shape(format!(
            "series has {} channels, weights expect m={m}",
            x.dim()
        )));
    }
    x.require(steps + 1)?;
    let mut u = vec![S::zero(); w.shape().n()];
    let mut predictions = Vec::with_capacity(steps + 1);
    predictions.push(u[..m].to_vec());
    for t in 0..steps {
        let input = if t <= t_switch {
            x.at(t)?.to_vec()
        } else {
            u[..m].to_vec()
        };
        u = step(w, &u, &input, act)?.0;
        predictions.push(u[..m].to_vec());
    }
    let mut error = S::zero();
    for (t, p) in predictions.iter().enumerate().skip(t_switch) {
        error += sq_err(p, x.at(t)?);
    }
    Ok(Replay { predictions, error })
}

pub fn replay_error<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    x: &Series<S>,
    t_switch: usize,
    steps: usize,
    act: &A,
) -> Result<S> {
    Ok(replay(w, x, t_switch, steps, act)?.error)
}
