//! Gradient of the truncated improvement objective with respect to the
//! candidate weights, a central-difference oracle, and the truncation
//! horizon implied by the gradient error bound.

use crate::cost::{improvement_objective, Hyperparams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{preactivation, Shape, Squash, StateSeq, Weights};
use crate::scalar::Scalar;
use crate::series::Series;

/// Partial derivatives with respect to `F` and `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<S> {
    pub df: Matrix<S>,
    pub dg: Matrix<S>,
}

impl<S: Scalar> Gradient<S> {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            df: Matrix::zeros(shape.n(), shape.n()),
            dg: Matrix::zeros(shape.n(), shape.m() + 1),
        }
    }

    /// Euclidean norm over all `n(n+m+1)` entries.
    pub fn norm(&self) -> S {
        (self.df.sum_squares() + self.dg.sum_squares()).sqrt()
    }

    pub fn dot(&self, other: &Self) -> S {
        self.df.dot(&other.df) + self.dg.dot(&other.dg)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            df: self.df.add_scaled(-S::one(), &other.df),
            dg: self.dg.add_scaled(-S::one(), &other.dg),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.df.is_finite() && self.dg.is_finite()
    }

    /// Entries in the flat order `dF` row-major then `dG` row-major.
    pub fn iter(&self) -> impl Iterator<Item = S> + '_ {
        self.df.as_slice().iter().chain(self.dg.as_slice()).copied()
    }

    /// `w - alpha · self`.
    pub fn descend(&self, w: &Weights<S>, alpha: S) -> Result<Weights<S>> {
        Weights::new(
            w.f().add_scaled(-alpha, &self.df),
            w.g().add_scaled(-alpha, &self.dg),
        )
        .map_err(|_| Error::NonFinite(format!("step of size {alpha} produced non-finite weights")))
    }
}

/// Largest componentwise relative difference `|a-b| / max(|a|, |b|, floor)`.
pub fn max_relative_error<S: Scalar>(a: &Gradient<S>, b: &Gradient<S>, floor: S) -> S {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| {
            let denom = p.abs().max(q.abs()).max(floor);
            (p - q).abs() / denom
        })
        .fold(S::zero(), |acc, e| if e > acc || e.is_nan() { e } else { acc })
}

/// Gradient of [`improvement_objective`] in `w_cand`, evaluated at `w_cand = w_eval = w`.
pub fn grad<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    seq: &StateSeq<S>,
    x: &Series<S>,
    hp: &Hyperparams<S>,
    act: &A,
) -> Result<Gradient<S>> {
    improvement_gradient(w, w, seq, x, hp, act)
}

/// Gradient of [`improvement_objective`] with respect to `w_cand`.
///
/// For each `t` the K-step unrolling is run forward, then the error signal
/// is pulled back through the closed-loop Jacobians
/// `diag(σ'(z_j))·(F + G_x·H)` to the first step, whose pre-activation is
/// the only place the candidate enters. `c(U)` does not depend on it.
pub fn improvement_gradient<S: Scalar, A: Squash<S>>(
    w_cand: &Weights<S>,
    w_eval: &Weights<S>,
    seq: &StateSeq<S>,
    x: &Series<S>,
    hp: &Hyperparams<S>,
    act: &A,
) -> Result<Gradient<S>> {
    let shape = w_cand.shape();
    if w_eval.shape() != shape {
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
    if seq.steps() != hp.steps() || seq.dim() != shape.n() {
        return Err(Error::Shape(format!(
            "state sequence is {}x{}, expected {}x{}",
            seq.len(),
            seq.dim(),
            hp.steps() + 1,
            shape.n()
        )));
    }
    x.require(hp.required_len())?;

    let (m, n, big_k) = (shape.m(), shape.n(), hp.horizon());
    let two = S::lit(2.0);
    let weights: Vec<S> = (1..=big_k).map(|k| two * hp.gamma().powi(k as i32)).collect();

    let mut out = Gradient::zeros(shape);
    // pre[j] and post[j] hold z_{j+1} and a_{j+1}.
    let mut pre = vec![vec![S::zero(); n]; big_k];
    let mut post = vec![vec![S::zero(); n]; big_k];
    let mut g_a = vec![S::zero(); n];
    let mut g_z = vec![S::zero(); n];

    for t in 0..hp.steps() {
        let u_t = &seq[t];
        let x_t = x.at(t)?;
        preactivation(w_cand, u_t, x_t, &mut pre[0]);
        for (a, z) in post[0].iter_mut().zip(&pre[0]) {
            *a = act.value(*z);
        }
        for j in 1..big_k {
            let (done, rest) = post.split_at_mut(j);
            let prev = &done[j - 1];
            preactivation(w_eval, prev, &prev[..m], &mut pre[j]);
            for (a, z) in rest[0].iter_mut().zip(&pre[j]) {
                *a = act.value(*z);
            }
        }

        g_a.iter_mut().for_each(|v| *v = S::zero());
        for j in (0..big_k).rev() {
            let target = x.at(t + j + 1)?;
            for c in 0..m {
                g_a[c] += weights[j] * (post[j][c] - target[c]);
            }
            for ((gz, ga), z) in g_z.iter_mut().zip(&g_a).zip(&pre[j]) {
                *gz = *ga * act.derivative(*z);
            }
            if j == 0 {
                break;
            }
            g_a.iter_mut().for_each(|v| *v = S::zero());
            w_eval.f().tr_mul_vec_acc(&g_z, &mut g_a);
            w_eval.g().tr_mul_vec_acc(&g_z, &mut g_a[..m]);
        }

        out.df.add_outer(&g_z, u_t);
        out.dg.add_outer(&g_z, x_t);
        for (r, gz) in g_z.iter().enumerate() {
            out.dg[(r, m)] += *gz;
        }
    }

    if !out.is_finite() {
        return Err(Error::NonFinite("gradient has non-finite entries".into()));
    }
    Ok(out)
}

/// Central differences of `objective` around `w`, one parameter at a time.
pub fn central_difference<S, F>(w: &Weights<S>, h: S, mut objective: F) -> Result<Gradient<S>>
where
    S: Scalar,
    F: FnMut(&Weights<S>) -> Result<S>,
{
    if !(h > S::zero()) {
        return Err(Error::Argument(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let shape = w.shape();
    let mut out = Gradient::zeros(shape);
    let nf = shape.n() * shape.n();
    let mut probe = w.clone();
    let two_h = h + h;
    for i in 0..shape.num_params() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let up = objective(&probe)?;
        *probe.param_mut(i) = orig - h;
        let down = objective(&probe)?;
        *probe.param_mut(i) = orig;
        let d = (up - down) / two_h;
        if i < nf {
            out.df.as_mut_slice()[i] = d;
        } else {
            out.dg.as_mut_slice()[i - nf] = d;
        }
    }
    Ok(out)
}

/// Central-difference approximation of [`grad`]: only the candidate weights move.
pub fn fd_grad<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    seq: &StateSeq<S>,
    x: &Series<S>,
    hp: &Hyperparams<S>,
    h: S,
    act: &A,
) -> Result<Gradient<S>> {
    central_difference(w, h, |cand| improvement_objective(cand, w, seq, x, hp, act))
}

/// Horizon choice and the constants of the truncation error bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationReport {
    pub horizon: usize,
    /// `C1 · γ^{K/2}`: bound on the gradient error caused by truncating at `K`.
    pub bound: f64,
    pub c0: f64,
    pub c1: f64,
}

/// Smallest `K >= 1` with `C1·γ^{K/2} < ε0`, where
/// `C0 = 2T·√γ / (1 − √γ)` and `C1 = √(n(n+m+1))·C0`.
///
/// Assumes targets in `[-1, 1]`, so prediction errors are at most 2 per component.
pub fn truncation_horizon(epsilon0: f64, gamma: f64, steps: usize, shape: Shape) -> Result<TruncationReport> {
    truncation_horizon_scaled(epsilon0, gamma, steps, shape, 2.0)
}

/// As [`truncation_horizon`], with `max_error` bounding `‖e_{t,k}‖∞`
/// (`1 + max|x|` for targets outside `[-1, 1]`).
pub fn truncation_horizon_scaled(
    epsilon0: f64,
    gamma: f64,
    steps: usize,
    shape: Shape,
    max_error: f64,
) -> Result<TruncationReport> {
    if !(epsilon0 > 0.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "eps0 must be > 0, got {epsilon0}"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidHyperparameter(format!(
            "discount must satisfy 0 <= gamma < 1, got {gamma}"
        )));
    }
    if gamma == 0.0 {
        return Ok(TruncationReport {
            horizon: 1,
            bound: 0.0,
            c0: 0.0,
            c1: 0.0,
        });
    }
    let root = gamma.sqrt();
    let c0 = max_error * steps as f64 * root / (1.0 - root);
    let c1 = (shape.num_params() as f64).sqrt() * c0;
    let bound_at = |k: usize| c1 * gamma.powf(k as f64 / 2.0);
    let mut horizon = if epsilon0 >= c1 {
        1
    } else {
        let est = 2.0 * (epsilon0 / c1).ln() / gamma.ln();
        (est.floor() as usize).max(1)
    };
    while horizon > 1 && bound_at(horizon - 1) < epsilon0 {
        horizon -= 1;
    }
    while bound_at(horizon) >= epsilon0 {
        horizon += 1;
    }
    Ok(TruncationReport {
        horizon,
        bound: bound_at(horizon),
        c0,
        c1,
    })
}
