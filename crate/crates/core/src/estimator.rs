//! Fourier inversion of a thresholded characteristic-function field, the
//! hyperbolic-cross restricted variant, Parseval risk and rate calculators.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{FrequencyGrid, GridField, MAX_DIM};
use crate::scalar::{KahanSum, Scalar};
use crate::targets::TargetModel;
use crate::threshold::BinaryMask;

/// Regular lattice in space with `points[k]` nodes spanning `[lo[k], hi[k]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    points: Vec<usize>,
}

impl<T: Scalar> SpatialGrid<T> {
    pub fn new(lo: &[T], hi: &[T], points: &[usize]) -> Result<Self> {
        let d = lo.len();
        if d == 0 || d > MAX_DIM || hi.len() != d || points.len() != d {
            return Err(Error::InvalidGrid("spatial grid needs matching lo, hi, points of length 1..=3".into()));
        }
        for k in 0..d {
            if !(hi[k] > lo[k]) || !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {k}: need lo < hi")));
            }
            if points[k] < 2 {
                return Err(Error::InvalidGrid(format!("axis {k}: need at least 2 points")));
            }
        }
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            points: points.to_vec(),
        })
    }

    /// One full period of the Riemann-sum inverse of a field on `grid`:
    /// `M_k` points with spacing `2 pi / (M_k du_k)` starting at `center_k - pi / du_k`.
    /// On this lattice the discrete Parseval identity holds exactly.
    pub fn dual_period(grid: &FrequencyGrid<T>, center: &[T]) -> Result<Self> {
        let d = grid.dim();
        if center.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: center.len(),
            });
        }
        let two_pi = T::c(2.0 * PI);
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        for k in 0..d {
            let m = grid.points()[k];
            let period = two_pi / grid.spacing()[k];
            let dx = period / T::from_usize_lossy(m);
            let start = center[k] - period / T::c(2.0);
            lo.push(start);
            hi.push(start + dx * T::from_usize_lossy(m - 1));
        }
        Self::new(&lo, &hi, grid.points())
    }

    pub fn from_box(bounds: &[(f64, f64)], points: &[usize]) -> Result<Self> {
        let lo: Vec<T> = bounds.iter().map(|b| T::c(b.0)).collect();
        let hi: Vec<T> = bounds.iter().map(|b| T::c(b.1)).collect();
        Self::new(&lo, &hi, points)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn spacing(&self, axis: usize) -> T {
        (self.hi[axis] - self.lo[axis]) / T::from_usize_lossy(self.points[axis] - 1)
    }

    pub fn coord(&self, axis: usize, j: usize) -> T {
        self.lo[axis] + T::from_usize_lossy(j) * self.spacing(axis)
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<T> {
        (0..self.points[axis]).map(|j| self.coord(axis, j)).collect()
    }

    /// Cell volume `prod_k dx_k`.
    pub fn cell_volume(&self) -> T {
        (0..self.dim()).map(|k| self.spacing(k)).fold(T::one(), |a, b| a * b)
    }

    pub fn multi_index(&self, mut index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for k in (0..self.dim()).rev() {
            out[k] = index % self.points[k];
            index /= self.points[k];
        }
        out
    }

    pub fn node(&self, index: usize) -> Vec<T> {
        let m = self.multi_index(index);
        (0..self.dim()).map(|k| self.coord(k, m[k])).collect()
    }
}

/// Density values on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate<T> {
    pub grid: SpatialGrid<T>,
    pub values: Vec<T>,
}

impl<T: Scalar> DensityEstimate<T> {
    /// Riemann sum of the values over the grid.
    pub fn integral(&self) -> T {
        let s: KahanSum<T> = self.values.iter().copied().collect();
        s.value() * self.grid.cell_volume()
    }

    /// Writes `x_1,...,x_d,fhat` rows in grid order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.grid.dim();
        let header: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
        writeln!(out, "{},fhat", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            for x in self.grid.node(i) {
                write!(out, "{x},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    #[default]
    FullBox,
    /// `[-n, n]^d` intersected with `|u_1 ... u_d| <= n`.
    HyperbolicDn,
}

impl std::str::FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "full-box" | "box" | "full" => Ok(Self::FullBox),
            "hyperbolic-dn" | "hyperbolic" | "dn" => Ok(Self::HyperbolicDn),
            other => Err(Error::InvalidParameter(format!("unknown domain `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationDomain {
    pub kind: DomainKind,
    pub n: f64,
}

impl IntegrationDomain {
    pub fn new(kind: DomainKind, n: usize) -> Self {
        Self { kind, n: n as f64 }
    }

    pub fn contains<T: Scalar>(&self, u: &[T]) -> bool {
        let n = self.n;
        let abs: Vec<f64> = u.iter().map(|x| x.to_f64_lossy().abs()).collect();
        if abs.iter().any(|&a| a > n) {
            return false;
        }
        match self.kind {
            DomainKind::FullBox => true,
            DomainKind::HyperbolicDn => abs.iter().product::<f64>() <= n,
        }
    }

    /// Node-wise membership on a frequency grid.
    pub fn mask<T: Scalar>(&self, grid: &FrequencyGrid<T>) -> Vec<bool> {
        (0..grid.len()).map(|i| self.contains(&grid.node(i))).collect()
    }

    fn check_grid<T: Scalar>(&self, grid: &FrequencyGrid<T>) -> Result<()> {
        let extent = grid.max_extent().to_f64_lossy();
        if extent > self.n {
            return Err(Error::DomainTooSmall { n: self.n, extent });
        }
        Ok(())
    }
}

/// Nodes that survive the mask and the domain, with their values.
fn surviving<T: Scalar>(field: &GridField<T>, domain: &IntegrationDomain) -> Vec<(usize, Complex<T>)> {
    let grid = field.grid();
    field
        .values()
        .iter()
        .enumerate()
        .filter(|(i, v)| (v.re != T::zero() || v.im != T::zero()) && domain.contains(&grid.node(*i)))
        .map(|(i, v)| (i, *v))
        .collect()
}

/// `Re[(2 pi)^-d sum_u e^{-i<u,x>} phi(u) du]` at every spatial node, without the positive part.
pub fn invert_real_part<T: Scalar>(
    field: &GridField<T>,
    domain: &IntegrationDomain,
    x_grid: &SpatialGrid<T>,
) -> Result<Vec<T>> {
    let grid = field.grid();
    let d = grid.dim();
    if x_grid.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x_grid.dim(),
        });
    }
    domain.check_grid(grid)?;
    let nodes = surviving(field, domain);
    let scale = grid.cell_volume() / (T::c(2.0) * T::PI()).powi(d as i32);
    // per-axis tables e^{-i u_k(j) x_k(l)}, indexed [j * points_x + l]
    let tables: Vec<Vec<Complex<T>>> = (0..d)
        .map(|k| {
            let xs = x_grid.axis_coords(k);
            let mut t = Vec::with_capacity(grid.points()[k] * xs.len());
            for j in 0..grid.points()[k] {
                let u = grid.coord(k, j);
                t.extend(xs.iter().map(|&x| {
                    let (s, c) = (u * x).sin_cos();
                    Complex::new(c, -s)
                }));
            }
            t
        })
        .collect();
    let multis: Vec<([usize; MAX_DIM], Complex<T>)> =
        nodes.iter().map(|&(i, v)| (grid.multi_index(i), v)).collect();
    let px = x_grid.points().to_vec();
    let values = (0..x_grid.len())
        .into_par_iter()
        .map(|xi| {
            let xm = x_grid.multi_index(xi);
            let mut acc = KahanSum::new();
            for (m, v) in &multis {
                let mut e = tables[0][m[0] * px[0] + xm[0]];
                for k in 1..d {
                    e = e * tables[k][m[k] * px[k] + xm[k]];
                }
                acc.add((e * v).re);
            }
            acc.value() * scale
        })
        .collect();
    Ok(values)
}

/// Density estimate: positive part of the real Fourier inverse of `field`
/// restricted to `domain`, as a masked Riemann sum over nonzero nodes.
pub fn invert_to_density<T: Scalar>(
    field: &GridField<T>,
    domain: &IntegrationDomain,
    x_grid: &SpatialGrid<T>,
) -> Result<DensityEstimate<T>> {
    let values = invert_real_part(field, domain, x_grid)?
        .into_iter()
        .map(|v| if v > T::zero() { v } else { T::zero() })
        .collect();
    Ok(DensityEstimate {
        grid: x_grid.clone(),
        values,
    })
}

/// Exact volume of `[-n, n]^d` intersected with `|u_1 ... u_d| <= n`.
pub fn dn_volume(n: f64, d: usize) -> Result<f64> {
    check_dn_args(n, d)?;
    // P(U_1 ... U_{d} <= t) = t sum_{k<d} (-ln t)^k / k! with t = n^{1-d}
    let l = (d as f64 - 1.0) * n.ln();
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..d {
        term *= l / k as f64;
        sum += term;
    }
    Ok(2f64.powi(d as i32) * n * sum)
}

/// Leading-order volume `2^d (d-1)^{d-1} / (d-1)! n (ln n)^{d-1}`.
pub fn dn_volume_asymptotic(n: f64, d: usize) -> Result<f64> {
    check_dn_args(n, d)?;
    let dm1 = d as f64 - 1.0;
    let fact: f64 = (1..d).map(|k| k as f64).product();
    Ok(2f64.powi(d as i32) * dm1.powf(dm1) / fact * n * n.ln().powf(dm1))
}

fn check_dn_args(n: f64, d: usize) -> Result<()> {
    if !(2..=3).contains(&d) {
        return Err(Error::InvalidParameter(format!("hyperbolic domain volume needs d in 2..=3, got {d}")));
    }
    if !(n > 1.0) || !n.is_finite() {
        return Err(Error::InvalidParameter(format!("need n > 1, got {n}")));
    }
    Ok(())
}

/// Components of the Parseval risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub risk: f64,
    pub norm_f_sq: f64,
    pub normalized_risk: f64,
    /// `(2 pi)^-d` times the model tail bound outside the grid.
    pub tail_correction: f64,
    /// Set when some frequency spacing exceeds `pi` over the model's spatial width.
    pub coarse_grid: bool,
}

/// Riemann sums over fixed-size chunks, folded in order, so the result does
/// not depend on the thread count.
fn deterministic_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    const CHUNK: usize = 4096;
    let chunks: Vec<f64> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = KahanSum::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(len) {
                s.add(f(i));
            }
            s.value()
        })
        .collect();
    chunks.into_iter().collect::<KahanSum<f64>>().value()
}

/// `(2 pi)^-d [sum |phi_tilde 1_D - phi|^2 du + T]` with `T` the model's tail bound
/// outside the grid box, together with the same quantity for `phi_tilde = 0`.
pub fn l2_risk_fourier<T: Scalar>(
    field_tilde: &GridField<T>,
    model: &TargetModel,
    domain: &IntegrationDomain,
) -> Result<RiskBreakdown> {
    let grid = field_tilde.grid();
    let d = grid.dim();
    if model.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: model.dim(),
        });
    }
    let du = grid.cell_volume().to_f64_lossy();
    let norm = (2.0 * PI).powi(d as i32);
    let values = field_tilde.values();
    let (diff, energy) = {
        let pairs: Vec<(f64, f64)> = (0..grid.len())
            .into_par_iter()
            .with_min_len(256)
            .map(|i| {
                let u: Vec<f64> = grid.node(i).iter().map(|x| x.to_f64_lossy()).collect();
                let phi = model.cf(&u);
                let v = values[i];
                let kept = if domain.contains(&u) {
                    num_complex::Complex64::new(v.re.to_f64_lossy(), v.im.to_f64_lossy())
                } else {
                    num_complex::Complex64::new(0.0, 0.0)
                };
                ((kept - phi).norm_sqr(), phi.norm_sqr())
            })
            .collect();
        (
            deterministic_sum(pairs.len(), |i| pairs[i].0),
            deterministic_sum(pairs.len(), |i| pairs[i].1),
        )
    };
    let extent: Vec<f64> = grid.extent().iter().map(|x| x.to_f64_lossy()).collect();
    let tail = model.cf_tail_energy(&extent);
    let risk = (diff * du + tail) / norm;
    let norm_f_sq = (energy * du + tail) / norm;
    let coarse_grid = model
        .plot_box()
        .iter()
        .zip(grid.spacing())
        .any(|((lo, hi), s)| s.to_f64_lossy() > PI / (hi - lo));
    Ok(RiskBreakdown {
        risk,
        norm_f_sq,
        normalized_risk: risk / norm_f_sq,
        tail_correction: tail / norm,
        coarse_grid,
    })
}

/// Spatial counterpart of [`l2_risk_fourier`]: Riemann sums of `|fhat - f|^2`
/// and `f^2` over `x_grid`, with or without the positive part.
pub fn l2_risk_spatial<T: Scalar>(
    field_tilde: &GridField<T>,
    model: &TargetModel,
    domain: &IntegrationDomain,
    x_grid: &SpatialGrid<T>,
    positive_part: bool,
) -> Result<(f64, f64)> {
    if model.dim() != x_grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: x_grid.dim(),
            found: model.dim(),
        });
    }
    let fhat = invert_real_part(field_tilde, domain, x_grid)?;
    let dx = x_grid.cell_volume().to_f64_lossy();
    let truth: Vec<f64> = (0..x_grid.len())
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = x_grid.node(i).iter().map(|v| v.to_f64_lossy()).collect();
            model.density(&x)
        })
        .collect();
    let err = deterministic_sum(fhat.len(), |i| {
        let mut v = fhat[i].to_f64_lossy();
        if positive_part {
            v = v.max(0.0);
        }
        (v - truth[i]).powi(2)
    });
    let norm = deterministic_sum(truth.len(), |i| truth[i] * truth[i]);
    Ok((err * dx, norm * dx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClearance {
    pub clear: bool,
    /// Largest field modulus on the outermost shell (0 without a field).
    pub max_boundary_modulus: f64,
}

/// Whether no mask node lies on the outermost shell of the grid.
pub fn boundary_clearance<T: Scalar>(mask: &BinaryMask<T>, field: Option<&GridField<T>>) -> BoundaryClearance {
    let grid = mask.grid();
    let clear = !mask
        .bits()
        .iter()
        .enumerate()
        .any(|(i, &b)| b && grid.is_boundary(i));
    let max_boundary_modulus = field
        .map(|f| {
            f.values()
                .iter()
                .enumerate()
                .filter(|(i, _)| f.grid().is_boundary(*i))
                .map(|(_, v)| v.norm().to_f64_lossy())
                .fold(0.0, f64::max)
        })
        .unwrap_or(0.0);
    BoundaryClearance {
        clear,
        max_boundary_modulus,
    }
}

/// Whether `a` is invertible (`|det| > 1e-12`) with every row of l1 norm at most 1.
pub fn is_in_class_a(a: &DMatrix<f64>) -> bool {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return false;
    }
    if !(a.determinant().abs() > 1e-12) {
        return false;
    }
    a.row_iter().all(|row| row.iter().map(|x| x.abs()).sum::<f64>() <= 1.0)
}

/// Anisotropic Sobolev smoothness `s`, radius `l` and optional direction matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolevSpec {
    pub s: Vec<f64>,
    pub l: f64,
    pub a: Option<DMatrix<f64>>,
}

impl SobolevSpec {
    pub fn new(s: Vec<f64>, l: f64, a: Option<DMatrix<f64>>) -> Result<Self> {
        if s.is_empty() || s.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("smoothness exponents must be positive".into()));
        }
        if let Some(m) = &a {
            if m.nrows() != s.len() || m.ncols() != s.len() {
                return Err(Error::DimensionMismatch {
                    expected: s.len(),
                    found: m.nrows(),
                });
            }
            if !is_in_class_a(m) {
                return Err(Error::InvalidParameter("direction matrix is outside the admissible class".into()));
            }
        }
        Ok(Self { s, l, a })
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// Harmonic aggregate: `1 / s_bar = sum_k 1 / s_k`.
    pub fn s_bar(&self) -> f64 {
        1.0 / self.s.iter().map(|x| 1.0 / x).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevRate {
    pub s_bar: f64,
    pub m_star: Vec<f64>,
    pub rate_exponent: f64,
    pub rate_value: f64,
}

/// Optimal cutoffs `m_k = (n / ln n)^{2 s_bar / (2 s_k (2 s_bar + 1))}` and the
/// rate `(n / ln n)^{-2 s_bar / (2 s_bar + 1)}`.
pub fn sobolev_rate(spec: &SobolevSpec, n: f64) -> Result<SobolevRate> {
    if !(n >= 2.0) {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    if spec.s.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter("smoothness exponents must be positive".into()));
    }
    let s_bar = spec.s_bar();
    let inverse_sum: f64 = spec.s.iter().map(|x| 1.0 / x).sum();
    let base = n / n.ln();
    // 2 s_bar / (2 s_bar + 1) without rounding s_bar first
    let rate_exponent = 2.0 / (2.0 + inverse_sum);
    let m_star = spec
        .s
        .iter()
        .map(|&sk| base.powf(2.0 * s_bar / (2.0 * sk * (2.0 * s_bar + 1.0))))
        .collect();
    Ok(SobolevRate {
        s_bar,
        m_star,
        rate_exponent,
        rate_value: base.powf(-rate_exponent),
    })
}
