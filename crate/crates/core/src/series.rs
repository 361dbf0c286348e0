//! Target time series, per-channel normalization into the squashing range,
//! and deterministic synthetic generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How indices past the stored samples are answered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PadMode {
    #[default]
    None,
    /// Repeat the last stored sample.
    Hold,
}

/// Affine map `normalized = (raw - offset) / scale` for one channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelNorm<S> {
    pub scale: S,
    pub offset: S,
}

impl<S: Scalar> ChannelNorm<S> {
    pub fn identity() -> Self {
        Self {
            scale: S::one(),
            offset: S::zero(),
        }
    }

    /// Maps `[lo, hi]` onto `[-1, 1]`. A zero-width range keeps unit scale
    /// and maps the constant to 0.
    pub fn from_range(lo: S, hi: S) -> Self {
        let two = S::lit(2.0);
        let half = (hi - lo) / two;
        let offset = lo + half;
        let scale = if half > S::zero() { half } else { S::one() };
        Self { scale, offset }
    }

    pub fn normalize(&self, raw: S) -> S {
        (raw - self.offset) / self.scale
    }

    pub fn denormalize(&self, v: S) -> S {
        v * self.scale + self.offset
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series<S> {
    values: Vec<Vec<S>>,
    norm: Vec<ChannelNorm<S>>,
    pad: PadMode,
}

impl<S: Scalar> Series<S> {
    /// Wraps samples that already live in `[-1, 1]`, with identity normalization.
    pub fn from_normalized(values: Vec<Vec<S>>) -> Result<Self> {
        let dim = check_rows(&values)?;
        for (t, row) in values.iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !(v.abs() <= S::one())) {
                return Err(Error::Data(format!(
                    "sample {t} has component {v} outside [-1, 1]"
                )));
            }
        }
        Ok(Self {
            values,
            norm: vec![ChannelNorm::identity(); dim],
            pad: PadMode::None,
        })
    }

    /// Normalizes raw samples per channel onto `[-1, 1]` and records the map.
    pub fn normalize(raw: &[Vec<S>]) -> Result<Self> {
        let dim = check_rows(raw)?;
        let norm: Vec<ChannelNorm<S>> = (0..dim)
            .map(|c| {
                let (lo, hi) = raw
                    .iter()
                    .fold((S::infinity(), S::neg_infinity()), |(lo, hi), r| {
                        (lo.min(r[c]), hi.max(r[c]))
                    });
                ChannelNorm::from_range(lo, hi)
            })
            .collect();
        let values = raw
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&norm)
                    .map(|(v, n)| n.normalize(*v).max(-S::one()).min(S::one()))
                    .collect()
            })
            .collect();
        Ok(Self {
            values,
            norm,
            pad: PadMode::None,
        })
    }

    pub fn with_pad(mut self, pad: PadMode) -> Self {
        self.pad = pad;
        self
    }

    pub fn pad(&self) -> PadMode {
        self.pad
    }

    /// Number of stored samples.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Channel count `m`.
    pub fn dim(&self) -> usize {
        self.norm.len()
    }

    pub fn norm_meta(&self) -> &[ChannelNorm<S>] {
        &self.norm
    }

    pub fn values(&self) -> &[Vec<S>] {
        &self.values
    }

    /// Number of addressable indices, counting padding.
    pub fn available(&self) -> usize {
        match self.pad {
            PadMode::None => self.values.len(),
            PadMode::Hold => usize::MAX,
        }
    }

    /// Normalized sample at index `t`.
    pub fn at(&self, t: usize) -> Result<&[S]> {
        match self.values.get(t) {
            Some(v) => Ok(v),
            None if self.pad == PadMode::Hold && !self.values.is_empty() => {
                Ok(self.values.last().expect("non-empty"))
            }
            None => Err(Error::OutOfRange(format!(
                "series index {t} beyond {} samples (no padding)",
                self.values.len()
            ))),
        }
    }

    /// Fails unless indices `0..len` are addressable.
    pub fn require(&self, len: usize) -> Result<()> {
        if len > self.available() {
            return Err(Error::OutOfRange(format!(
                "series has {} samples, {len} required",
                self.values.len()
            )));
        }
        Ok(())
    }

    /// Drops the first `k` samples, keeping normalization and padding.
    pub fn shifted(&self, k: usize) -> Self {
        Self {
            values: self.values.iter().skip(k).cloned().collect(),
            norm: self.norm.clone(),
            pad: self.pad,
        }
    }

    pub fn denormalize_row(&self, row: &[S]) -> Vec<S> {
        row.iter()
            .zip(&self.norm)
            .map(|(v, n)| n.denormalize(*v))
            .collect()
    }

    /// Samples mapped back to their original scale.
    pub fn raw_values(&self) -> Vec<Vec<S>> {
        self.values.iter().map(|r| self.denormalize_row(r)).collect()
    }
}

fn check_rows<S>(rows: &[Vec<S>]) -> Result<usize> {
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "series needs at least 2 samples, got {}",
            rows.len()
        )));
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(Error::Data("series samples have no channels".into()));
    }
    if let Some(t) = rows.iter().position(|r| r.len() != dim) {
        return Err(Error::Data(format!(
            "sample {t} has {} channels, expected {dim}",
            rows[t].len()
        )));
    }
    Ok(dim)
}

/// One sinusoid `amplitude · sin(2π·freq·t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineComponent {
    pub amplitude: f64,
    pub freq: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SeriesKind {
    Sine { freq: f64, phase: f64 },
    SumOfSines(Vec<SineComponent>),
    Square { freq: f64 },
}

impl SeriesKind {
    fn eval(&self, t: f64, shift: f64) -> f64 {
        use std::f64::consts::TAU;
        match self {
            SeriesKind::Sine { freq, phase } => (TAU * freq * t + phase + shift).sin(),
            SeriesKind::SumOfSines(parts) => {
                let total: f64 = parts.iter().map(|p| p.amplitude.abs()).sum();
                let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
                parts
                    .iter()
                    .map(|p| p.amplitude * (TAU * p.freq * t + p.phase + shift).sin())
                    .sum::<f64>()
                    * scale
            }
            SeriesKind::Square { freq } => {
                let s = (TAU * freq * t + shift).sin();
                if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Deterministic synthetic series with `len` samples and `m` channels.
///
/// Channel 0 follows `kind` exactly; further channels get a phase offset
/// drawn from `seed`. Values are already inside `[-1, 1]`.
pub fn gen_series<S: Scalar>(kind: &SeriesKind, len: usize, m: usize, seed: u64) -> Result<Series<S>> {
    if len < 2 {
        return Err(Error::Argument(format!("series length must be >= 2, got {len}")));
    }
    if m == 0 {
        return Err(Error::Argument("channel count must be positive".into()));
    }
    if let SeriesKind::SumOfSines(parts) = kind {
        if parts.is_empty() {
            return Err(Error::Argument(
                "sum of sines needs at least one component".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<f64> = (0..m)
        .map(|c| {
            if c == 0 {
                0.0
            } else {
                rng.gen_range(0.0..std::f64::consts::TAU)
            }
        })
        .collect();
    let values = (0..len)
        .map(|t| {
            shifts
                .iter()
                .map(|s| S::lit(kind.eval(t as f64, *s).clamp(-1.0, 1.0)))
                .collect()
        })
        .collect();
    Series::from_normalized(values)
}
