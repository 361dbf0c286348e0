#![allow(dead_code)]

use piranha::linalg::Matrix;
use piranha::net::{HiddenState, Shape, StateSeq, Weights};
use piranha::optimizer::clip_recurrent;
use piranha::series::Series;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub shape: Shape,
    pub w: Weights<f64>,
    pub x: Series<f64>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, r: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-r..=r))
}

pub fn random_series(rng: &mut ChaCha8Rng, len: usize, m: usize) -> Series<f64> {
    let rows = (0..len)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    Series::from_normalized(rows).unwrap()
}

pub fn random_states(rng: &mut ChaCha8Rng, n: usize, steps: usize) -> StateSeq<f64> {
    let states = (0..=steps)
        .map(|_| HiddenState((0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()))
        .collect();
    StateSeq::new(states).unwrap()
}

/// Weights uniform in [-scale, scale], `F` clipped to `1/√γ` when `clip_gamma` is set.
pub fn random_instance(
    seed: u64,
    m: usize,
    n: usize,
    len: usize,
    scale: f64,
    clip_gamma: Option<f64>,
) -> Instance {
    let mut rng = rng(seed);
    let shape = Shape::new(m, n).unwrap();
    let mut f = uniform_matrix(&mut rng, n, n, scale);
    if let Some(g) = clip_gamma {
        f = clip_recurrent(&f, g);
    }
    let g = uniform_matrix(&mut rng, n, m + 1, scale);
    let x = random_series(&mut rng, len, m);
    Instance {
        shape,
        w: Weights::new(f, g).unwrap(),
        x,
    }
}

/// The acceptance instance family: n in 3..=6, m in 1..=3, clipped `F`.
pub fn acceptance_instance(i: u64, steps: usize, horizon: usize, gamma: f64) -> Instance {
    let mut pick = rng(1000 + i);
    let n = pick.gen_range(3..=6);
    let m = pick.gen_range(1..=3usize.min(n - 1));
    random_instance(i, m, n, steps + 2 * horizon + 1, 1.0, Some(gamma))
}

pub fn tanh(z: f64) -> f64 {
    z.tanh()
}

/// Independent single-step simulator: σ(F u + G [v; 1]) with explicit loops.
pub fn naive_step(w: &Weights<f64>, u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = u.len();
    let m = v.len();
    (0..n)
        .map(|r| {
            let mut z = 0.0;
            for c in 0..n {
                z += w.f()[(r, c)] * u[c];
            }
            for c in 0..m {
                z += w.g()[(r, c)] * v[c];
            }
            z += w.g()[(r, m)];
            tanh(z)
        })
        .collect()
}

/// k-step prediction from `u` at time `t`, re-simulated from scratch:
/// one teacher-forced step with `first`, then `rest` with outputs fed back.
pub fn naive_predict(
    first: &Weights<f64>,
    rest: &Weights<f64>,
    u: &[f64],
    t: usize,
    k: usize,
    x: &Series<f64>,
) -> Vec<f64> {
    let m = x.dim();
    if k == 0 {
        return u.to_vec();
    }
    let mut s = naive_step(first, u, x.at(t).unwrap());
    for _ in 1..k {
        let fb: Vec<f64> = s[..m].to_vec();
        s = naive_step(rest, &s, &fb);
    }
    s
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// A series the network reproduces exactly: its own free-running output from u_0 = 0.
pub fn self_generated_series(w: &Weights<f64>, len: usize) -> Series<f64> {
    let m = w.shape().m();
    let mut u = vec![0.0; w.shape().n()];
    let mut rows = vec![u[..m].to_vec()];
    while rows.len() < len {
        let v = rows.last().unwrap().clone();
        u = naive_step(w, &u, &v);
        rows.push(u[..m].to_vec());
    }
    Series::from_normalized(rows).unwrap()
}
