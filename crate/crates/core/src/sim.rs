//! Reproducible samplers: i.i.d. draws and two dependent one-dimensional chains.
//!
//! Randomness comes from [`RngStream`]: a ChaCha8 generator keyed by a seed and
//! switched to an independent stream per replication, so a path depends only on
//! `(seed, stream_id)`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::SampleSet;
use crate::targets::TargetModel;

/// Seed plus stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Uniform draw on the open interval `(0, 1)`.
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * f64::EPSILON
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChainKind {
    #[default]
    Iid,
    /// Hold-or-redraw chain with polynomially decaying strong-mixing coefficients.
    Doukhan,
    /// `Z_j = (Z_{j-1} + eps_j) / 2` with fair-coin innovations.
    DyadicAr,
}

impl std::str::FromStr for ChainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "iid" => Ok(Self::Iid),
            "doukhan" | "doukhan-alpha" => Ok(Self::Doukhan),
            "dyadic-ar" | "dyadic" | "ar" => Ok(Self::DyadicAr),
            other => Err(Error::InvalidParameter(format!("unknown chain kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ChainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Iid => "iid",
            Self::Doukhan => "doukhan",
            Self::DyadicAr => "dyadic-ar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub kind: ChainKind,
    /// Mixing exponent of the Doukhan chain, `a > 1`.
    pub a: f64,
    /// Discarded initial steps of the dyadic chain.
    pub burn_in: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            kind: ChainKind::Iid,
            a: 3.0,
            burn_in: 0,
        }
    }
}

impl ChainConfig {
    pub fn iid() -> Self {
        Self::default()
    }

    pub fn doukhan(a: f64) -> Self {
        Self {
            kind: ChainKind::Doukhan,
            a,
            burn_in: 0,
        }
    }

    pub fn dyadic_ar(burn_in: usize) -> Self {
        Self {
            kind: ChainKind::DyadicAr,
            burn_in,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ChainKind::Doukhan && !(self.a > 1.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!("Doukhan exponent must exceed 1, got {}", self.a)));
        }
        Ok(())
    }

    /// Draws a path of length `n` with marginal `target`.
    pub fn simulate(&self, target: &TargetModel, n: usize, stream: RngStream) -> Result<SampleSet<f64>> {
        self.validate()?;
        match self.kind {
            ChainKind::Iid => sample_iid(target, n, stream),
            ChainKind::Doukhan => doukhan_chain(self.a, target, n, stream),
            ChainKind::DyadicAr => dyadic_ar_chain(target, n, self.burn_in, stream),
        }
    }
}

/// `n` independent draws from `model`.
pub fn sample_iid(model: &TargetModel, n: usize, stream: RngStream) -> Result<SampleSet<f64>> {
    let mut rng = stream.rng();
    let mut data = Vec::with_capacity(n * model.dim());
    for _ in 0..n {
        model.sample(&mut rng, &mut data);
    }
    SampleSet::new(data, model.dim())
}

fn require_quantile(target: &TargetModel) -> Result<()> {
    if target.has_quantile() {
        Ok(())
    } else {
        Err(Error::NoSampler(format!(
            "chains need a one-dimensional target with a quantile function, `{}` has dimension {}",
            target.name(),
            target.dim()
        )))
    }
}

fn quantile(target: &TargetModel, p: f64) -> f64 {
    target.quantile(p).expect("quantile checked by require_quantile")
}

/// Raw `[0, 1]` path of the Doukhan chain started from its invariant law.
pub fn doukhan_path(a: f64, n: usize, stream: RngStream) -> Result<Vec<f64>> {
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("Doukhan exponent must exceed 1, got {a}")));
    }
    let mut rng = stream.rng();
    let mut path = Vec::with_capacity(n);
    if n == 0 {
        return Ok(path);
    }
    let mut y = open_unit(&mut rng).powf(1.0 / a);
    path.push(y);
    for _ in 1..n {
        let u = open_unit(&mut rng);
        let v = open_unit(&mut rng);
        if u < y {
            y = v.powf(1.0 / (a + 1.0));
        }
        path.push(y);
    }
    Ok(path)
}

/// Doukhan chain with marginal `target`: `X_j = F^{-1}(Y_j^a)`.
pub fn doukhan_chain(a: f64, target: &TargetModel, n: usize, stream: RngStream) -> Result<SampleSet<f64>> {
    require_quantile(target)?;
    let path = doukhan_path(a, n, stream)?;
    let mut data = Vec::with_capacity(n);
    let mut last: Option<(f64, f64)> = None;
    for y in path {
        let x = match last {
            Some((prev, x)) if prev == y => x,
            _ => quantile(target, y.powf(a)),
        };
        last = Some((y, x));
        data.push(x);
    }
    SampleSet::new(data, 1)
}

/// Raw `(0, 1)` path of the dyadic autoregression after `burn_in` discarded steps.
///
/// The state is kept as a 64-bit binary fraction so the recursion is exact;
/// reported values are truncated to 52 bits and offset by half an ulp so they
/// never hit 0 or 1.
pub fn dyadic_path(n: usize, burn_in: usize, stream: RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    let mut state = rng.next_u64();
    let mut path = Vec::with_capacity(n);
    let to_unit = |k: u64| ((k >> 12) as f64 + 0.5) * f64::EPSILON;
    if n > 0 {
        for _ in 0..burn_in {
            state = (state >> 1) | ((rng.random::<bool>() as u64) << 63);
        }
        path.push(to_unit(state));
    }
    for _ in 1..n {
        let eps = rng.random::<bool>() as u64;
        state = (state >> 1) | (eps << 63);
        path.push(to_unit(state));
    }
    path
}

/// Dyadic autoregression with marginal `target`: `X_j = F^{-1}(Z_j)`.
pub fn dyadic_ar_chain(target: &TargetModel, n: usize, burn_in: usize, stream: RngStream) -> Result<SampleSet<f64>> {
    require_quantile(target)?;
    let data = dyadic_path(n, burn_in, stream)
        .into_iter()
        .map(|z| quantile(target, z))
        .collect();
    SampleSet::new(data, 1)
}
