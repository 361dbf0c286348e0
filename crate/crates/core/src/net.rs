//! Recurrent network dynamics: the single step, the projection onto the
//! visible units, k-step propagation with free-running feedback, the
//! sequence operator `S` and the teacher-forced rollout.

use std::ops::Deref;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::series::Series;

/// Visible dimension `m` and hidden dimension `n`, with `n > m >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    m: usize,
    n: usize,
}

impl Shape {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n <= m {
            return Err(Error::Shape(format!("need n > m >= 1, got m={m} n={n}")));
        }
        Ok(Self { m, n })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of trainable parameters, `n(n+m+1)`.
    pub fn num_params(&self) -> usize {
        self.n * (self.n + self.m + 1)
    }
}

/// Squashing nonlinearity together with its derivative.
pub trait Squash<S: Scalar> {
    fn value(&self, z: S) -> S;
    fn derivative(&self, z: S) -> S;

    /// Upper bound on the slope. The truncation bound assumes this is <= 1.
    fn max_slope(&self) -> f64;

    fn name(&self) -> &str;

    /// Human-readable notes on violated convergence assumptions.
    fn assumption_warnings(&self) -> Vec<String> {
        if self.max_slope() > 1.0 {
            vec![format!(
                "squashing function {} has slope up to {} > 1; the gradient truncation bound does not apply",
                self.name(),
                self.max_slope()
            )]
        } else {
            Vec::new()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tanh;

impl<S: Scalar> Squash<S> for Tanh {
    fn value(&self, z: S) -> S {
        z.tanh()
    }

    fn derivative(&self, z: S) -> S {
        let t = z.tanh();
        S::one() - t * t
    }

    fn max_slope(&self) -> f64 {
        1.0
    }

    fn name(&self) -> &str {
        "tanh"
    }
}

/// Recurrent weights `F` (n×n) and input weights `G` (n×(m+1)).
///
/// The last column of `G` multiplies the constant bias input 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<S> {
    f: Matrix<S>,
    g: Matrix<S>,
}

impl<S: Scalar> Weights<S> {
    pub fn new(f: Matrix<S>, g: Matrix<S>) -> Result<Self> {
        let n = f.rows();
        if f.cols() != n {
            return Err(Error::Shape(format!(
                "F must be square, got {}x{}",
                f.rows(),
                f.cols()
            )));
        }
        if g.rows() != n || g.cols() < 2 {
            return Err(Error::Shape(format!(
                "G must be {n}x(m+1) with m >= 1, got {}x{}",
                g.rows(),
                g.cols()
            )));
        }
        Shape::new(g.cols() - 1, n)?;
        if !f.is_finite() || !g.is_finite() {
            return Err(Error::Argument("weights contain non-finite entries".into()));
        }
        Ok(Self { f, g })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            f: Matrix::zeros(shape.n, shape.n),
            g: Matrix::zeros(shape.n, shape.m + 1),
        }
    }

    /// Entries i.i.d. uniform in `[-r, r]`, filling `F` then `G` row by row.
    pub fn random_uniform<R: Rng + ?Sized>(shape: Shape, r: S, rng: &mut R) -> Self {
        let r = r.as_f64();
        let mut draw = |_: usize, _: usize| {
            if r > 0.0 {
                S::lit(rng.gen_range(-r..=r))
            } else {
                S::zero()
            }
        };
        let f = Matrix::from_fn(shape.n, shape.n, &mut draw);
        let g = Matrix::from_fn(shape.n, shape.m + 1, &mut draw);
        Self { f, g }
    }

    pub fn shape(&self) -> Shape {
        Shape {
            m: self.g.cols() - 1,
            n: self.f.rows(),
        }
    }

    pub fn f(&self) -> &Matrix<S> {
        &self.f
    }

    pub fn g(&self) -> &Matrix<S> {
        &self.g
    }

    pub fn f_mut(&mut self) -> &mut Matrix<S> {
        &mut self.f
    }

    pub fn g_mut(&mut self) -> &mut Matrix<S> {
        &mut self.g
    }

    pub fn into_parts(self) -> (Matrix<S>, Matrix<S>) {
        (self.f, self.g)
    }

    pub fn is_finite(&self) -> bool {
        self.f.is_finite() && self.g.is_finite()
    }

    /// Mutable access to parameter `i` in the flat order `F` row-major then `G` row-major.
    pub fn param_mut(&mut self, i: usize) -> &mut S {
        let nf = self.f.as_slice().len();
        if i < nf {
            &mut self.f.as_mut_slice()[i]
        } else {
            &mut self.g.as_mut_slice()[i - nf]
        }
    }
}

/// Hidden activation vector `u` of length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<S>(pub Vec<S>);

impl<S: Scalar> HiddenState<S> {
    pub fn zeros(n: usize) -> Self {
        Self(vec![S::zero(); n])
    }
}

impl<S> Deref for HiddenState<S> {
    type Target = [S];

    fn deref(&self) -> &[S] {
        &self.0
    }
}

/// States `u_0..u_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSeq<S> {
    states: Vec<HiddenState<S>>,
}

impl<S: Scalar> StateSeq<S> {
    pub fn new(states: Vec<HiddenState<S>>) -> Result<Self> {
        let n = states
            .first()
            .map(|s| s.len())
            .ok_or_else(|| Error::Shape("state sequence must hold at least u_0".into()))?;
        if states.iter().any(|s| s.len() != n) {
            return Err(Error::Shape("states differ in dimension".into()));
        }
        Ok(Self { states })
    }

    /// All-zero sequence of length `steps + 1`.
    pub fn zeros(n: usize, steps: usize) -> Self {
        Self {
            states: vec![HiddenState::zeros(n); steps + 1],
        }
    }

    /// Number of transitions `T` (one less than the number of states).
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn states(&self) -> &[HiddenState<S>] {
        &self.states
    }
}

impl<S> Deref for StateSeq<S> {
    type Target = [HiddenState<S>];

    fn deref(&self) -> &[HiddenState<S>] {
        &self.states
    }
}

/// `σ(F·u + G·[v; 1])`.
pub fn step<S: Scalar, A: Squash<S>>(w: &Weights<S>, u: &[S], v: &[S], act: &A) -> Result<HiddenState<S>> {
    let Shape { m, n } = w.shape();
    if u.len() != n {
        return Err(Error::Shape(format!(
            "state has length {}, expected {n}",
            u.len()
        )));
    }
    if v.len() != m {
        return Err(Error::Shape(format!(
            "input has length {}, expected {m}",
            v.len()
        )));
    }
    let mut z = vec![S::zero(); n];
    preactivation(w, u, v, &mut z);
    Ok(HiddenState(z.into_iter().map(|z| act.value(z)).collect()))
}

/// Writes `F·u + G_x·v + g_b` into `z`; dimensions are trusted.
pub(crate) fn preactivation<S: Scalar>(w: &Weights<S>, u: &[S], v: &[S], z: &mut [S]) {
    let m = w.g.cols() - 1;
    for (r, zr) in z.iter_mut().enumerate() {
        let mut acc = S::zero();
        for (a, b) in w.f.row(r).iter().zip(u) {
            acc += *a * *b;
        }
        let grow = w.g.row(r);
        for (a, b) in grow[..m].iter().zip(v) {
            acc += *a * *b;
        }
        *zr = acc + grow[m];
    }
}

/// Visible part `H·u`: the first `m` components.
pub fn project<S: Scalar>(u: &[S], m: usize) -> Result<Vec<S>> {
    if m == 0 || m >= u.len() {
        return Err(Error::Shape(format!(
            "cannot project a {}-dimensional state onto {m} outputs (need n > m >= 1)",
            u.len()
        )));
    }
    Ok(u[..m].to_vec())
}

/// k-step propagation of `u` from time `t`.
///
/// The first step uses `w_first` with the teacher input `x_t`; the remaining
/// `k-1` steps use `w_rest` with the network's own projected output fed back
/// as input, so the bias input stays 1 throughout. `k = 0` is the identity.
pub fn propagate_k<S: Scalar, A: Squash<S>>(
    w_first: &Weights<S>,
    w_rest: &Weights<S>,
    u: &[S],
    t: usize,
    k: usize,
    x: &Series<S>,
    act: &A,
) -> Result<HiddenState<S>> {
    if w_first.shape() != w_rest.shape() {
        return Err(Error::Shape("weight pairs differ in shape".into()));
    }
    x.require(t + k + 1)?;
    if k == 0 {
        return Ok(HiddenState(u.to_vec()));
    }
    let m = w_first.shape().m;
    let mut a = step(w_first, u, x.at(t)?, act)?;
    for _ in 1..k {
        a = free_step(w_rest, &a, m, act);
    }
    Ok(a)
}

/// Closed-loop step `σ(F·u + G_x·(H·u) + g_b)`.
pub(crate) fn free_step<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    u: &[S],
    m: usize,
    act: &A,
) -> HiddenState<S> {
    let mut z = vec![S::zero(); u.len()];
    preactivation(w, u, &u[..m], &mut z);
    HiddenState(z.into_iter().map(|z| act.value(z)).collect())
}

/// Sequence operator: `(0, σ(F·u_0 + G·[x_0;1]), …, σ(F·u_{T-1} + G·[x_{T-1};1]))`.
pub fn apply_s<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    seq: &StateSeq<S>,
    x: &Series<S>,
    act: &A,
) -> Result<StateSeq<S>> {
    let n = w.shape().n;
    if seq.dim() != n {
        return Err(Error::Shape(format!(
            "state sequence has dimension {}, weights expect {n}",
            seq.dim()
        )));
    }
    let steps = seq.steps();
    x.require(steps)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(HiddenState::zeros(n));
    for t in 0..steps {
        out.push(step(w, &seq[t], x.at(t)?, act)?);
    }
    Ok(StateSeq { states: out })
}

/// Teacher-forced state sequence from `u_0 = 0`: `u_{t+1} = σ(F·u_t + G·[x_t;1])`.
pub fn rollout<S: Scalar, A: Squash<S>>(
    w: &Weights<S>,
    x: &Series<S>,
    steps: usize,
    act: &A,
) -> Result<StateSeq<S>> {
    let n = w.shape().n;
    x.require(steps)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(HiddenState::zeros(n));
    for t in 0..steps {
        let next = step(w, &states[t], x.at(t)?, act)?;
        states.push(next);
    }
    Ok(StateSeq { states })
}
