//! Threshold rules, excursion-set masks and the Euler-characteristic selection
//! of the threshold constant.

use std::io::{self, Write};

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{FrequencyGrid, GridField};
use crate::scalar::Scalar;

/// Shape of the threshold level as a function of the sample count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    /// `(1 + kappa * sqrt(log n)) / sqrt(n)`.
    #[default]
    SqrtLog,
    /// `(1 + kappa * log n) / sqrt(n)`, for geometrically tau-dependent data.
    Log,
    /// `kappa * sqrt(log(h(u) n) / n)` with `h(u) = prod_k (1 + |u_k|)`.
    UDependent,
}

impl std::str::FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "sqrt-log" | "sqrtlog" => Ok(Self::SqrtLog),
            "log" => Ok(Self::Log),
            "u-dependent" | "udependent" => Ok(Self::UDependent),
            other => Err(Error::InvalidParameter(format!("unknown rule kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRule<T> {
    pub kind: RuleKind,
    pub kappa: T,
}

impl<T: Scalar> ThresholdRule<T> {
    pub fn new(kind: RuleKind, kappa: T) -> Result<Self> {
        if !(kappa >= T::zero()) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        Ok(Self { kind, kappa })
    }

    pub fn sqrt_log(kappa: T) -> Self {
        Self {
            kind: RuleKind::SqrtLog,
            kappa,
        }
    }

    pub fn log(kappa: T) -> Self {
        Self {
            kind: RuleKind::Log,
            kappa,
        }
    }

    /// True when the level does not depend on the frequency.
    pub fn is_constant(&self) -> bool {
        self.kind != RuleKind::UDependent
    }

    /// Threshold level at frequency `u` for `n` observations.
    pub fn level(&self, u: &[T], n: usize) -> T {
        let nf = T::from_usize_lossy(n);
        let log_n = nf.ln();
        match self.kind {
            RuleKind::SqrtLog => (T::one() + self.kappa * log_n.sqrt()) / nf.sqrt(),
            RuleKind::Log => (T::one() + self.kappa * log_n) / nf.sqrt(),
            RuleKind::UDependent => {
                let h = u.iter().fold(T::one(), |acc, &x| acc * (T::one() + x.abs()));
                self.kappa * ((h * nf).ln() / nf).sqrt()
            }
        }
    }
}

/// Boolean lattice marking the frequencies that survive a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask<T> {
    grid: FrequencyGrid<T>,
    bits: Vec<bool>,
}

impl<T: Scalar> BinaryMask<T> {
    pub fn new(grid: FrequencyGrid<T>, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "mask has {} bits for {} nodes",
                bits.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, bits })
    }

    pub fn filled(grid: FrequencyGrid<T>, value: bool) -> Self {
        let bits = vec![value; grid.len()];
        Self { grid, bits }
    }

    pub fn grid(&self) -> &FrequencyGrid<T> {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.bits.len() == other.bits.len() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Writes the mask as a plain-text PBM (`P1`). Columns run along the last
    /// axis; the first row is the lowest index of the first axis. d = 1 masks
    /// are written as a single row.
    pub fn write_pbm<W: Write>(&self, mut out: W) -> io::Result<()> {
        let (rows, cols) = match self.grid.dim() {
            1 => (1, self.grid.points()[0]),
            2 => (self.grid.points()[0], self.grid.points()[1]),
            _ => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    "PBM export supports d = 1 or d = 2",
                ))
            }
        };
        writeln!(out, "P1")?;
        writeln!(out, "{cols} {rows}")?;
        for r in 0..rows {
            let line: Vec<&str> = self.bits[r * cols..(r + 1) * cols]
                .iter()
                .map(|&b| if b { "1" } else { "0" })
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

fn check_sample_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("sample count must be >= 2, got {n}")));
    }
    Ok(())
}

/// Excursion set `{u : |field(u)| >= level(u)}` (inclusive comparison).
pub fn threshold_mask<T: Scalar>(field: &GridField<T>, rule: &ThresholdRule<T>, n: usize) -> Result<BinaryMask<T>> {
    check_sample_count(n)?;
    let grid = field.grid();
    let bits = if rule.is_constant() {
        let level = rule.level(&[], n);
        field.values().iter().map(|z| z.norm() >= level).collect()
    } else {
        field
            .values()
            .iter()
            .enumerate()
            .map(|(i, z)| z.norm() >= rule.level(&grid.node(i), n))
            .collect()
    };
    BinaryMask::new(grid.clone(), bits)
}

/// Zeroes `field` outside `mask`.
pub fn apply_threshold<T: Scalar>(field: &GridField<T>, mask: &BinaryMask<T>) -> Result<GridField<T>> {
    if field.grid() != mask.grid() {
        return Err(Error::GridMismatch);
    }
    let zero = Complex::new(T::zero(), T::zero());
    let values = field
        .values()
        .iter()
        .zip(mask.bits())
        .map(|(&z, &keep)| if keep { z } else { zero })
        .collect();
    GridField::new(field.grid().clone(), values)
}

/// Euler characteristic of the union of closed unit cells marked in `mask`.
///
/// Cells are segments (d = 1) or squares (d = 2); the value is `V - E` or
/// `V - E + F` over the distinct faces of the union.
pub fn euler_characteristic<T: Scalar>(mask: &BinaryMask<T>) -> Result<i64> {
    let pts = mask.grid().points();
    match mask.grid().dim() {
        1 => Ok(euler_characteristic_1d(mask.bits())),
        2 => Ok(euler_characteristic_2d(mask.bits(), pts[0], pts[1])),
        d => Err(Error::Unsupported(format!("Euler characteristic in dimension {d}"))),
    }
}

/// `V - E` for a row of closed unit segments.
pub fn euler_characteristic_1d(bits: &[bool]) -> i64 {
    let m = bits.len();
    let edges = bits.iter().filter(|b| **b).count() as i64;
    let vertices = (0..=m)
        .filter(|&p| (p > 0 && bits[p - 1]) || (p < m && bits[p]))
        .count() as i64;
    vertices - edges
}

/// `V - E + F` for a `rows x cols` row-major image of closed unit squares.
pub fn euler_characteristic_2d(bits: &[bool], rows: usize, cols: usize) -> i64 {
    assert_eq!(bits.len(), rows * cols, "bit buffer does not match shape");
    let cell = |r: isize, c: isize| -> bool {
        r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols && bits[r as usize * cols + c as usize]
    };
    let faces = bits.iter().filter(|b| **b).count() as i64;
    let mut vertices = 0i64;
    let mut edges = 0i64;
    for p in 0..=rows as isize {
        for q in 0..=cols as isize {
            // lattice vertex (p, q) is a corner of cells (p-1..=p, q-1..=q)
            if cell(p - 1, q - 1) || cell(p - 1, q) || cell(p, q - 1) || cell(p, q) {
                vertices += 1;
            }
            // edge (p, q)-(p, q+1) borders cells (p-1, q) and (p, q)
            if q < cols as isize && (cell(p - 1, q) || cell(p, q)) {
                edges += 1;
            }
            // edge (p, q)-(p+1, q) borders cells (p, q-1) and (p, q)
            if p < rows as isize && (cell(p, q - 1) || cell(p, q)) {
                edges += 1;
            }
        }
    }
    vertices - edges + faces
}

/// How `chi_{kappa - 1}` in the stabilization rule is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StabilizationStep {
    /// Compare consecutive scan indices (step `delta` in kappa).
    #[default]
    Index,
    /// Compare kappa with kappa - 1 (step `round(1 / delta)` in the index).
    Unit,
}

impl std::str::FromStr for StabilizationStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "index" => Ok(Self::Index),
            "unit" => Ok(Self::Unit),
            other => Err(Error::InvalidParameter(format!("unknown stabilization step `{other}`"))),
        }
    }
}

/// Parameters of the kappa scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaScan {
    pub delta: f64,
    pub kappa_max: f64,
    pub window: usize,
    #[serde(default)]
    pub step: StabilizationStep,
}

impl Default for KappaScan {
    fn default() -> Self {
        Self {
            delta: 0.05,
            kappa_max: 5.0,
            window: 1,
            step: StabilizationStep::Index,
        }
    }
}

impl KappaScan {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.kappa_max >= self.delta) || !self.kappa_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa_max ({}) must be >= delta ({})",
                self.kappa_max, self.delta
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("stabilization window must be >= 1".into()));
        }
        Ok(())
    }

    /// Largest scan index `floor(kappa_max / delta)`.
    pub fn max_index(&self) -> usize {
        (self.kappa_max / self.delta + 1e-9).floor() as usize
    }

    /// Index distance between the two compared Euler characteristics.
    pub fn stride(&self) -> usize {
        match self.step {
            StabilizationStep::Index => 1,
            StabilizationStep::Unit => (1.0 / self.delta).round().max(1.0) as usize,
        }
    }
}

/// Outcome of the Euler-characteristic kappa selection.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaSelection<T> {
    pub scan: KappaScan,
    pub selected_kappa: T,
    /// False when the characteristic never stabilized; `selected_kappa` is then `kappa_max`.
    pub stabilized: bool,
    /// `(kappa_k, chi_k)` for every scanned index.
    pub chi_curve: Vec<(T, i64)>,
}

/// First index `k` with `chi[k] = chi[k - s] = ... = chi[k - window * s]`.
pub fn first_stabilization(chi: &[i64], window: usize, stride: usize) -> Option<usize> {
    let span = window * stride;
    (span.max(1)..chi.len()).find(|&k| (1..=window).all(|t| chi[k - (t - 1) * stride] == chi[k - t * stride]))
}

/// Euler characteristic of the excursion set at every scan level.
pub fn chi_curve<T: Scalar>(field: &GridField<T>, n: usize, kind: RuleKind, scan: &KappaScan) -> Result<Vec<(T, i64)>> {
    check_sample_count(n)?;
    scan.validate()?;
    if field.grid().dim() > 2 {
        return Err(Error::Unsupported(format!(
            "Euler characteristic in dimension {}",
            field.grid().dim()
        )));
    }
    let delta = T::c(scan.delta);
    (0..=scan.max_index())
        .into_par_iter()
        .map(|k| {
            let kappa = T::from_usize_lossy(k) * delta;
            let rule = ThresholdRule { kind, kappa };
            let mask = threshold_mask(field, &rule, n)?;
            Ok((kappa, euler_characteristic(&mask)?))
        })
        .collect()
}

/// Selects kappa as the first scan level at which the Euler characteristic of
/// the excursion set stops changing.
pub fn select_kappa<T: Scalar>(field: &GridField<T>, n: usize, kind: RuleKind, scan: &KappaScan) -> Result<KappaSelection<T>> {
    let curve = chi_curve(field, n, kind, scan)?;
    let chi: Vec<i64> = curve.iter().map(|(_, c)| *c).collect();
    let (selected_kappa, stabilized) = match first_stabilization(&chi, scan.window, scan.stride()) {
        Some(k) => (curve[k].0, true),
        None => (T::c(scan.kappa_max), false),
    };
    Ok(KappaSelection {
        scan: *scan,
        selected_kappa,
        stabilized,
        chi_curve: curve,
    })
}

/// Writes a `kappa,chi` CSV.
pub fn write_chi_csv<T: Scalar, W: Write>(curve: &[(T, i64)], mut out: W) -> io::Result<()> {
    writeln!(out, "kappa,chi")?;
    for (k, c) in curve {
        writeln!(out, "{k},{c}")?;
    }
    Ok(())
}
