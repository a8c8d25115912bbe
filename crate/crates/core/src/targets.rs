//! Analytic target distributions.
//!
//! Every [`TargetModel`] knows its characteristic function, density, an upper
//! bound on the energy `int_{||u||_inf > U} |cf(u)|^2 du` outside a frequency
//! box, and how to draw samples. One-dimensional models also expose a CDF and
//! quantile function.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::special::{gamma_p, ln_gamma, normal_cdf, normal_quantile, solve_increasing};

/// Absolute tolerance of the numerical quantile solvers.
pub const QUANTILE_TOL: f64 = 1e-12;

/// Parametrization used for `Gamma(p, q)` in model names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GammaConvention {
    #[default]
    ShapeScale,
    ShapeRate,
}

impl std::str::FromStr for GammaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "shape-scale" => Ok(Self::ShapeScale),
            "shape-rate" => Ok(Self::ShapeRate),
            other => Err(Error::InvalidParameter(format!("unknown gamma convention `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    cov_inv: DMatrix<f64>,
    det: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Gaussian(GaussianParams),
    Gamma { shape: f64, scale: f64 },
    /// Beta(2, 2) on `[0, 1]`.
    Beta22,
    Mixture { weights: Vec<f64>, components: Vec<TargetModel> },
    /// Independent coordinates, one 1-D model per axis.
    Product(Vec<TargetModel>),
    /// `X = W Y`.
    Linear {
        base: Box<TargetModel>,
        w: DMatrix<f64>,
        w_inv: DMatrix<f64>,
        abs_det: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    name: String,
    dim: usize,
    family: Family,
    plot_box: Vec<(f64, f64)>,
}

fn beta_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// `int_0^1 6x(1-x) e^{iux} dx` by 64-node Gauss–Legendre, one panel per 50 units of `|u|`.
fn beta22_cf(u: f64) -> Complex64 {
    let panels = ((u.abs() / 50.0).ceil() as usize).max(1);
    let rule = beta_rule();
    let h = 1.0 / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = p as f64 * h;
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let t = lo + 0.5 * h * (x + 1.0);
            let f = 6.0 * t * (1.0 - t);
            let (s, c) = (u * t).sin_cos();
            acc += Complex64::new(c, s) * (0.5 * h * w * f);
        }
    }
    acc
}

fn check_matrix(m: &DMatrix<f64>, d: usize, what: &str) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m.nrows().max(m.ncols()),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Half-widths `r` of the largest box (scaled from the bounding box of
/// `m([-U, U])`) contained in the parallelepiped `m([-U, U])`.
fn inscribed_box(m: &DMatrix<f64>, extent: &[f64]) -> Option<Vec<f64>> {
    let d = extent.len();
    let inv = m.clone().try_inverse()?;
    let s: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|k| m[(j, k)].abs() * extent[k]).sum())
        .collect();
    let worst = (0..d)
        .map(|k| (0..d).map(|j| (inv[(k, j)] / extent[k]).abs() * s[j]).sum::<f64>())
        .fold(0.0, f64::max);
    if !(worst > 0.0) {
        return None;
    }
    Some(s.iter().map(|x| x / worst).collect())
}

impl TargetModel {
    fn build(name: impl Into<String>, dim: usize, family: Family) -> Self {
        let mut model = Self {
            name: name.into(),
            dim,
            family,
            plot_box: Vec::new(),
        };
        model.plot_box = model.default_plot_box();
        model
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Same model under another name.
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Default spatial box `[(lo, hi); d]` holding essentially all of the mass.
    pub fn plot_box(&self) -> &[(f64, f64)] {
        &self.plot_box
    }

    pub fn with_plot_box(mut self, plot_box: Vec<(f64, f64)>) -> Result<Self> {
        if plot_box.len() != self.dim || plot_box.iter().any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidParameter("plot box must have d increasing intervals".into()));
        }
        self.plot_box = plot_box;
        Ok(self)
    }

    fn default_plot_box(&self) -> Vec<(f64, f64)> {
        match &self.family {
            Family::Gaussian(g) => (0..self.dim)
                .map(|k| {
                    let sd = g.cov[(k, k)].sqrt();
                    (g.mean[k] - 6.0 * sd, g.mean[k] + 6.0 * sd)
                })
                .collect(),
            Family::Gamma { .. } => vec![(0.0, self.quantile(1.0 - 1e-7).unwrap_or(1.0))],
            Family::Beta22 => vec![(0.0, 1.0)],
            Family::Mixture { components, .. } => (0..self.dim)
                .map(|k| {
                    components.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                        (lo.min(c.plot_box[k].0), hi.max(c.plot_box[k].1))
                    })
                })
                .collect(),
            Family::Product(parts) => parts.iter().map(|p| p.plot_box[0]).collect(),
            Family::Linear { base, w, .. } => {
                let d = self.dim;
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for corner in 0..(1usize << d) {
                    let y: Vec<f64> = (0..d)
                        .map(|k| if corner >> k & 1 == 1 { base.plot_box[k].1 } else { base.plot_box[k].0 })
                        .collect();
                    for r in 0..d {
                        let x: f64 = (0..d).map(|c| w[(r, c)] * y[c]).sum();
                        lo[r] = lo[r].min(x);
                        hi[r] = hi[r].max(x);
                    }
                }
                lo.into_iter().zip(hi).collect()
            }
        }
    }

    /// Characteristic function `E exp(i<u, X>)`.
    pub fn cf(&self, u: &[f64]) -> Complex64 {
        debug_assert_eq!(u.len(), self.dim);
        match &self.family {
            Family::Gaussian(g) => {
                let uv = DVector::from_column_slice(u);
                let quad = (uv.transpose() * &g.cov * &uv)[(0, 0)];
                let phase = uv.dot(&g.mean);
                Complex64::new(-0.5 * quad, phase).exp()
            }
            Family::Gamma { shape, scale } => {
                let z = Complex64::new(1.0, -scale * u[0]);
                (-shape * z.ln()).exp()
            }
            Family::Beta22 => beta22_cf(u[0]),
            Family::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| c.cf(u) * *w)
                .sum(),
            Family::Product(parts) => parts
                .iter()
                .zip(u)
                .fold(Complex64::new(1.0, 0.0), |acc, (p, &uk)| acc * p.cf(&[uk])),
            Family::Linear { base, w, .. } => {
                let d = self.dim;
                let v: Vec<f64> = (0..d).map(|j| (0..d).map(|k| w[(k, j)] * u[k]).sum()).collect();
                base.cf(&v)
            }
        }
    }

    /// `|cf(u)|^2`.
    pub fn cf_energy_density(&self, u: &[f64]) -> f64 {
        self.cf(u).norm_sqr()
    }

    /// Probability density at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        match &self.family {
            Family::Gaussian(g) => {
                let diff = DVector::from_column_slice(x) - &g.mean;
                let quad = (diff.transpose() * &g.cov_inv * &diff)[(0, 0)];
                (-0.5 * quad).exp() / ((2.0 * PI).powi(self.dim as i32) * g.det).sqrt()
            }
            Family::Gamma { shape, scale } => {
                let t = x[0];
                if t <= 0.0 {
                    if t == 0.0 && *shape == 1.0 {
                        return 1.0 / scale;
                    }
                    return 0.0;
                }
                ((shape - 1.0) * t.ln() - t / scale - ln_gamma(*shape) - shape * scale.ln()).exp()
            }
            Family::Beta22 => {
                let t = x[0];
                if (0.0..=1.0).contains(&t) {
                    6.0 * t * (1.0 - t)
                } else {
                    0.0
                }
            }
            Family::Mixture { weights, components } => {
                weights.iter().zip(components).map(|(w, c)| w * c.density(x)).sum()
            }
            Family::Product(parts) => parts.iter().zip(x).map(|(p, &xk)| p.density(&[xk])).product(),
            Family::Linear { base, w_inv, abs_det, .. } => {
                let d = self.dim;
                let y: Vec<f64> = (0..d).map(|r| (0..d).map(|c| w_inv[(r, c)] * x[c]).sum()).collect();
                base.density(&y) / abs_det
            }
        }
    }

    /// Cumulative distribution function (d = 1 only).
    pub fn cdf(&self, x: f64) -> Option<f64> {
        if self.dim != 1 {
            return None;
        }
        Some(match &self.family {
            Family::Gaussian(g) => normal_cdf((x - g.mean[0]) / g.cov[(0, 0)].sqrt()),
            Family::Gamma { shape, scale } => gamma_p(*shape, (x / scale).max(0.0)),
            Family::Beta22 => {
                let t = x.clamp(0.0, 1.0);
                t * t * (3.0 - 2.0 * t)
            }
            Family::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.cdf(x).unwrap_or(0.0))
                .sum(),
            Family::Product(parts) => parts[0].cdf(x)?,
            Family::Linear { base, w, .. } => {
                let a = w[(0, 0)];
                let y = base.cdf(x / a)?;
                if a > 0.0 {
                    y
                } else {
                    1.0 - y
                }
            }
        })
    }

    /// True when [`quantile`](Self::quantile) is available.
    pub fn has_quantile(&self) -> bool {
        self.dim == 1
    }

    /// Quantile function on `(0, 1)` (d = 1 only).
    pub fn quantile(&self, p: f64) -> Option<f64> {
        if self.dim != 1 || !(0.0..=1.0).contains(&p) {
            return None;
        }
        Some(match &self.family {
            Family::Gaussian(g) => g.mean[0] + g.cov[(0, 0)].sqrt() * normal_quantile(p),
            Family::Gamma { shape, scale } => {
                if p == 0.0 {
                    return Some(0.0);
                }
                if p == 1.0 {
                    return Some(f64::INFINITY);
                }
                let (k, th) = (*shape, *scale);
                let mut hi = (k + 10.0 * k.sqrt() + 10.0) * th;
                while gamma_p(k, hi / th) < p {
                    hi *= 2.0;
                }
                solve_increasing(
                    |x| gamma_p(k, x / th),
                    |x| self.density(&[x]),
                    p,
                    0.0,
                    hi,
                    QUANTILE_TOL,
                )
            }
            Family::Beta22 => solve_increasing(
                |x| x * x * (3.0 - 2.0 * x),
                |x| 6.0 * x * (1.0 - x),
                p,
                0.0,
                1.0,
                QUANTILE_TOL,
            ),
            Family::Mixture { components, .. } => {
                if p == 0.0 || p == 1.0 {
                    let qs = components.iter().filter_map(|c| c.quantile(p));
                    return Some(if p == 0.0 {
                        qs.fold(f64::INFINITY, f64::min)
                    } else {
                        qs.fold(f64::NEG_INFINITY, f64::max)
                    });
                }
                let qs: Vec<f64> = components.iter().filter_map(|c| c.quantile(p)).collect();
                let lo = qs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi - lo <= QUANTILE_TOL {
                    return Some(lo);
                }
                solve_increasing(
                    |x| self.cdf(x).unwrap_or(f64::NAN),
                    |x| self.density(&[x]),
                    p,
                    lo,
                    hi,
                    QUANTILE_TOL,
                )
            }
            Family::Product(parts) => parts[0].quantile(p)?,
            Family::Linear { base, w, .. } => {
                let a = w[(0, 0)];
                if a > 0.0 {
                    a * base.quantile(p)?
                } else {
                    a * base.quantile(1.0 - p)?
                }
            }
        })
    }

    /// Total energy `int |cf|^2 = (2 pi)^d ||f||^2` for single-family models; an
    /// upper bound for mixtures.
    pub fn energy(&self) -> f64 {
        match &self.family {
            Family::Gaussian(g) => PI.powf(self.dim as f64 / 2.0) / g.det.sqrt(),
            Family::Gamma { shape, scale } => {
                if *shape <= 0.5 {
                    return f64::INFINITY;
                }
                let k = *shape;
                2.0 * PI * (ln_gamma(2.0 * k - 1.0) - 2.0 * ln_gamma(k) - (2.0 * k - 1.0) * 2f64.ln()).exp() / scale
            }
            Family::Beta22 => 2.0 * PI * 1.2,
            Family::Mixture { weights, components } => {
                weights.iter().zip(components).map(|(w, c)| w * c.energy()).sum()
            }
            Family::Product(parts) => parts.iter().map(TargetModel::energy).product(),
            Family::Linear { base, abs_det, .. } => base.energy() / abs_det,
        }
    }

    /// Upper bound on `int_{||u||_inf > U} |cf(u)|^2 du` for the box half-widths `extent`.
    pub fn cf_tail_energy(&self, extent: &[f64]) -> f64 {
        let bound = match &self.family {
            Family::Gaussian(g) => {
                let norm = self.energy();
                (0..self.dim)
                    .map(|k| {
                        let sd = (0.5 * g.cov_inv[(k, k)]).sqrt();
                        norm * crate::special::erfc(extent[k] / (std::f64::consts::SQRT_2 * sd))
                    })
                    .sum()
            }
            Family::Gamma { shape, scale } => {
                // |cf|^2 = (1 + scale^2 u^2)^(-shape) <= (scale u)^(-2 shape)
                let k = *shape;
                if k <= 0.5 {
                    f64::INFINITY
                } else {
                    2.0 * scale.powf(-2.0 * k) * extent[0].powf(1.0 - 2.0 * k) / (2.0 * k - 1.0)
                }
            }
            Family::Beta22 => {
                // |cf(u)| <= 12 sqrt(u^2 + 4) / |u|^3 from the closed form
                let u = extent[0];
                288.0 * (1.0 / (3.0 * u.powi(3)) + 4.0 / (5.0 * u.powi(5)))
            }
            Family::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.cf_tail_energy(extent))
                .sum(),
            Family::Product(parts) => {
                let energies: Vec<f64> = parts.iter().map(TargetModel::energy).collect();
                (0..parts.len())
                    .map(|k| {
                        let others: f64 = energies
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != k)
                            .map(|(_, e)| e)
                            .product();
                        parts[k].cf_tail_energy(&extent[k..=k]) * others
                    })
                    .sum()
            }
            Family::Linear { base, w, abs_det, .. } => {
                // |cf(u)|^2 = |cf_Y(W^T u)|^2: the box maps onto a parallelepiped
                // containing the box `r`, so the outside region is covered by
                // the outside of `r` in Y-frequencies.
                match inscribed_box(&w.transpose(), extent) {
                    Some(r) => base.cf_tail_energy(&r) / abs_det,
                    None => f64::INFINITY,
                }
            }
        };
        bound.min(self.energy()).max(0.0)
    }

    /// Tail bound for `u -> |cf(M u)|^2` outside the box `extent`, with `M` invertible.
    pub fn cf_tail_energy_through(&self, m: &DMatrix<f64>, extent: &[f64]) -> f64 {
        let det = m.determinant().abs();
        match inscribed_box(m, extent) {
            Some(r) if det > 0.0 => self.cf_tail_energy(&r) / det,
            _ => f64::INFINITY,
        }
    }

    /// One draw from the model.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match &self.family {
            Family::Gaussian(g) => {
                let z: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
                for r in 0..self.dim {
                    let x: f64 = (0..=r).map(|c| g.chol[(r, c)] * z[c]).sum();
                    out.push(g.mean[r] + x);
                }
            }
            Family::Gamma { shape, scale } => {
                let dist = GammaDist::new(*shape, *scale).expect("validated gamma parameters");
                out.push(dist.sample(rng));
            }
            Family::Beta22 => {
                // median of three uniforms
                let mut u = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
                u.sort_by(f64::total_cmp);
                out.push(u[1]);
            }
            Family::Mixture { weights, components } => {
                let t: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = components.len() - 1;
                for (j, w) in weights.iter().enumerate() {
                    acc += w;
                    if t < acc {
                        chosen = j;
                        break;
                    }
                }
                components[chosen].sample(rng, out);
            }
            Family::Product(parts) => {
                for p in parts {
                    p.sample(rng, out);
                }
            }
            Family::Linear { base, w, .. } => {
                let mut y = Vec::with_capacity(self.dim);
                base.sample(rng, &mut y);
                for r in 0..self.dim {
                    out.push((0..self.dim).map(|c| w[(r, c)] * y[c]).sum());
                }
            }
        }
    }
}

/// Gaussian `N(mean, cov)` with symmetric positive-definite `cov`.
pub fn gaussian_cf(mean: &[f64], cov: &DMatrix<f64>) -> Result<TargetModel> {
    let d = mean.len();
    if d == 0 || d > 3 {
        return Err(Error::InvalidParameter(format!("dimension {d} outside 1..=3")));
    }
    check_matrix(cov, d, "covariance")?;
    let sym_err = (cov - cov.transpose()).abs().max();
    if sym_err > 1e-12 * cov.abs().max().max(1.0) {
        return Err(Error::InvalidParameter("covariance is not symmetric".into()));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))?;
    let l = chol.l();
    let det = l.diagonal().iter().map(|x| x * x).product::<f64>();
    let cov_inv = chol.inverse();
    let params = GaussianParams {
        mean: DVector::from_column_slice(mean),
        cov: cov.clone(),
        chol: l,
        cov_inv,
        det,
    };
    Ok(TargetModel::build("gaussian", d, Family::Gaussian(params)))
}

/// Univariate normal with the given mean and variance.
pub fn normal_1d(mean: f64, variance: f64) -> Result<TargetModel> {
    gaussian_cf(&[mean], &DMatrix::from_element(1, 1, variance))
}

/// Finite mixture `sum_j w_j * component_j`.
pub fn mixture_cf(weights: &[f64], components: Vec<TargetModel>) -> Result<TargetModel> {
    if weights.len() != components.len() || weights.is_empty() {
        return Err(Error::InvalidParameter("need one weight per component".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("weights must be nonnegative and sum to 1".into()));
    }
    let d = components[0].dim;
    if let Some(c) = components.iter().find(|c| c.dim != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: c.dim,
        });
    }
    Ok(TargetModel::build(
        "mixture",
        d,
        Family::Mixture {
            weights: weights.to_vec(),
            components,
        },
    ))
}

/// Gamma distribution with shape `k` and scale `theta`.
pub fn gamma_cf(shape: f64, scale: f64) -> Result<TargetModel> {
    if !(shape > 0.0) || !(scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma parameters must be positive, got shape {shape}, scale {scale}"
        )));
    }
    Ok(TargetModel::build("gamma", 1, Family::Gamma { shape, scale }))
}

/// Beta(2, 2) with density `6x(1 - x)` on `[0, 1]`.
pub fn beta22_cf_model() -> TargetModel {
    TargetModel::build("beta22", 1, Family::Beta22)
}

/// Joint law of independent one-dimensional coordinates.
pub fn product_model(parts: Vec<TargetModel>) -> Result<TargetModel> {
    if parts.is_empty() || parts.len() > 3 {
        return Err(Error::InvalidParameter("product needs 1 to 3 factors".into()));
    }
    if let Some(p) = parts.iter().find(|p| p.dim != 1) {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: p.dim,
        });
    }
    let d = parts.len();
    Ok(TargetModel::build("product", d, Family::Product(parts)))
}

/// Law of `X = W Y` for `Y ~ model`; nested transforms are composed.
pub fn linear_transform(model: &TargetModel, w: &DMatrix<f64>) -> Result<TargetModel> {
    let d = model.dim;
    check_matrix(w, d, "transform")?;
    let det = w.determinant();
    if det.abs() < 1e-14 {
        return Err(Error::InvalidParameter("transform matrix is singular".into()));
    }
    let (base, w_total) = match &model.family {
        Family::Linear { base, w: inner, .. } => ((**base).clone(), w * inner),
        _ => (model.clone(), w.clone()),
    };
    let w_inv = w_total
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("transform matrix is singular".into()))?;
    let abs_det = w_total.determinant().abs();
    Ok(TargetModel::build(
        format!("linear({})", model.name),
        d,
        Family::Linear {
            base: Box::new(base),
            w: w_total,
            w_inv,
            abs_det,
        },
    ))
}

/// Rotated Gamma model `X = (b X1, a X1 + b X2)`, `X1 ~ Gamma(alpha + 1/2, 1)`,
/// `X2 ~ Gamma(beta + 1/2, 1)`, with its companion matrix `A = b^-2 [[b, -a], [0, b]]`.
#[derive(Debug, Clone)]
pub struct Example1 {
    pub model: TargetModel,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub companion: DMatrix<f64>,
    /// Whether `a < b (1 - b)`, the stated admissible range.
    pub in_stated_range: bool,
    /// Whether the companion matrix maps `[-1, 1]^2` into itself.
    pub companion_in_class: bool,
}

pub fn example1_model(alpha: f64, beta: f64, b: f64, a: f64) -> Result<Example1> {
    if !(beta > 0.0 && beta < alpha) {
        return Err(Error::InvalidParameter(format!("need 0 < beta < alpha, got alpha {alpha}, beta {beta}")));
    }
    if !(b > 1.0) {
        return Err(Error::InvalidParameter(format!("need b > 1, got {b}")));
    }
    if a == 0.0 || !(a < b) {
        return Err(Error::InvalidParameter(format!("need a != 0 and a < b, got a {a}")));
    }
    let y = product_model(vec![gamma_cf(alpha + 0.5, 1.0)?, gamma_cf(beta + 0.5, 1.0)?])?;
    let w = DMatrix::from_row_slice(2, 2, &[b, 0.0, a, b]);
    let model = linear_transform(&y, &w)?.renamed("example1");
    let companion = DMatrix::from_row_slice(2, 2, &[b, -a, 0.0, b]) / (b * b);
    let companion_in_class = crate::estimator::is_in_class_a(&companion);
    Ok(Example1 {
        model,
        alpha,
        beta,
        a,
        b,
        companion,
        in_stated_range: a < b * (1.0 - b),
        companion_in_class,
    })
}

/// `B(m) = int_{A([-m, m])^c} |cf|^2`, written as `int_{[-m, m]^c} |cf(A u)|^2 du`
/// (`A = I` when absent): tensor Gauss–Legendre quadrature on graded panels over
/// the part of the complement inside `[-quad_extent, quad_extent]^d`, plus the
/// model's tail bound beyond it.
pub fn bias_quadrature(model: &TargetModel, m: &[f64], a: Option<&DMatrix<f64>>, quad_extent: f64) -> Result<f64> {
    let d = model.dim;
    if m.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m.len(),
        });
    }
    if d > 2 {
        return Err(Error::Unsupported("bias quadrature in dimension 3".into()));
    }
    if m.iter().any(|&x| !(x >= 0.0)) || !(quad_extent > m.iter().copied().fold(0.0, f64::max)) {
        return Err(Error::InvalidParameter("quad_extent must exceed every cutoff".into()));
    }
    let a = a.cloned().unwrap_or_else(|| DMatrix::identity(d, d));
    check_matrix(&a, d, "direction matrix")?;
    let rule = GaussLegendre::new(20);
    // per axis: three pieces [-E, -m], [-m, m], [m, E]
    let pieces: Vec<[(Vec<f64>, Vec<f64>); 3]> = m
        .iter()
        .map(|&mk| {
            let (xs, ws) = graded_nodes(&rule, mk, quad_extent);
            let neg: (Vec<f64>, Vec<f64>) = (xs.iter().map(|x| -x).collect(), ws.clone());
            let (cx, cw) = graded_nodes(&rule, 0.0, mk.max(1e-300));
            let mut center_x: Vec<f64> = cx.iter().map(|x| -x).collect();
            center_x.extend(cx.iter());
            let mut center_w = cw.clone();
            center_w.extend(cw.iter());
            [neg, (center_x, center_w), (xs, ws)]
        })
        .collect();
    let eval = |u: &[f64]| -> f64 {
        let v: Vec<f64> = (0..d).map(|r| (0..d).map(|c| a[(r, c)] * u[c]).sum()).collect();
        model.cf_energy_density(&v)
    };
    let mut total = 0.0;
    match d {
        1 => {
            for (p, (xs, ws)) in pieces[0].iter().enumerate() {
                if p == 1 {
                    continue;
                }
                total += xs.iter().zip(ws).map(|(&x, &w)| w * eval(&[x])).sum::<f64>();
            }
        }
        _ => {
            for p0 in 0..3 {
                for p1 in 0..3 {
                    if p0 == 1 && p1 == 1 {
                        continue;
                    }
                    let (x0, w0) = &pieces[0][p0];
                    let (x1, w1) = &pieces[1][p1];
                    for (&u0, &wa) in x0.iter().zip(w0) {
                        let row: f64 = x1.iter().zip(w1).map(|(&u1, &wb)| wb * eval(&[u0, u1])).sum();
                        total += wa * row;
                    }
                }
            }
        }
    }
    let tail = model.cf_tail_energy_through(&a, &vec![quad_extent; d]);
    Ok(total + tail)
}

/// Gauss–Legendre nodes on `[lo, hi]` (`0 <= lo < hi`) with panels that grow
/// geometrically away from the origin.
fn graded_nodes(rule: &GaussLegendre, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut a = lo;
    while a < hi {
        let width = (0.1 * a).max(0.25).min(hi - a);
        let (px, pw) = rule.composite(a, a + width, 1);
        xs.extend(px);
        ws.extend(pw);
        a += width;
    }
    (xs, ws)
}

/// Names accepted by [`by_name`].
pub const MODEL_NAMES: [&str; 6] = ["N", "MixNN", "GB", "Gamma32", "Mix1D", "Example1"];

/// Parameters for registry models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub gamma_convention: GammaConvention,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            gamma_convention: GammaConvention::ShapeScale,
            alpha: 2.0,
            beta: 1.0,
            a: -1.0,
            b: 2.0,
        }
    }
}

/// Looks up a registry model by (case-insensitive) name.
pub fn by_name(name: &str, params: &ModelParams) -> Result<TargetModel> {
    let key = name.to_ascii_lowercase().replace(['-', '_'], "");
    let m2 = |r: &[f64]| DMatrix::from_row_slice(2, 2, r);
    let model = match key.as_str() {
        "n" | "gaussian" => gaussian_cf(&[0.0, 0.0], &m2(&[1.0, 0.5, 0.5, 3.0]))?.renamed("N"),
        "mixnn" => mixture_cf(
            &[0.4, 0.6],
            vec![
                gaussian_cf(&[-2.0, -2.0], &m2(&[1.0, 0.2, 0.2, 3.0]))?,
                gaussian_cf(&[2.0, 2.0], &m2(&[1.0, 0.3, 0.3, 1.0]))?,
            ],
        )?
        .renamed("MixNN"),
        "gb" => {
            let y = product_model(vec![gamma_cf(5.0, 1.0)?, beta22_cf_model()])?;
            linear_transform(&y, &m2(&[1.0, 0.1, 0.2, 1.0]))?.renamed("GB")
        }
        "gamma32" => {
            let scale = match params.gamma_convention {
                GammaConvention::ShapeScale => 2.0,
                GammaConvention::ShapeRate => 0.5,
            };
            gamma_cf(3.0, scale)?.renamed("Gamma32")
        }
        "mix1d" => mixture_cf(&[0.7, 0.3], vec![normal_1d(3.0, 2.0)?, normal_1d(8.0, 1.0)?])?.renamed("Mix1D"),
        "example1" => example1_model(params.alpha, params.beta, params.b, params.a)?.model,
        _ => return Err(Error::UnknownModel(name.to_string())),
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gb() -> TargetModel {
        by_name("GB", &ModelParams::default()).unwrap()
    }

    #[test]
    fn gaussian_cf_values() {
        let std = normal_1d(0.0, 1.0).unwrap();
        assert_eq!(std.cf(&[0.0]), Complex64::new(1.0, 0.0));
        assert!((std.cf(&[1.0]).re - (-0.5f64).exp()).abs() < 1e-15);
        let n = by_name("N", &ModelParams::default()).unwrap();
        assert!((n.cf(&[1.0, 0.0]).norm() - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_mean_shift_is_a_phase() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 3.0]);
        let a = gaussian_cf(&[0.0, 0.0], &cov).unwrap();
        let b = gaussian_cf(&[1.5, -0.5], &cov).unwrap();
        let u = [0.7, -1.1];
        let phase = Complex64::new(0.0, 0.7 * 1.5 + 1.1 * 0.5).exp();
        assert!((b.cf(&u) - a.cf(&u) * phase).norm() < 1e-15);
        assert!((b.cf(&u).norm() - a.cf(&u).norm()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_rejects_bad_covariance() {
        let not_spd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(gaussian_cf(&[0.0, 0.0], &not_spd).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(gaussian_cf(&[0.0, 0.0], &asym).is_err());
    }

    #[test]
    fn exponential_cf() {
        let e = gamma_cf(1.0, 1.0).unwrap();
        assert!((e.cf(&[1.0]) - Complex64::new(0.5, 0.5)).norm() < 1e-15);
        assert_eq!(gamma_cf(5.0, 1.0).unwrap().cf(&[0.0]), Complex64::new(1.0, 0.0));
        assert!(gamma_cf(0.0, 1.0).is_err());
        assert!(gamma_cf(1.0, -1.0).is_err());
    }

    #[test]
    fn gamma_decay_exponent() {
        // |cf(u)|^2 = (1 + 4u^2)^-3 so u^6 |cf|^2 -> 1/64
        let g = gamma_cf(3.0, 2.0).unwrap();
        let u = 1e4;
        assert!((g.cf_energy_density(&[u]) * u.powi(6) * 64.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn beta_cf_closed_form() {
        let b = beta22_cf_model();
        for &u in &[0.0, 0.3, 2.0, 5.0, 37.0, 120.0, 199.0, 450.0] {
            let z = Complex64::new(0.0, u);
            let exact = if u == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                ((z - 2.0) * z.exp() + z + 2.0) * 6.0 / (z * z * z)
            };
            assert!((b.cf(&[u]) - exact).norm() < 1e-12, "u={u}");
        }
        // symmetric about 1/2: e^{-iu/2} cf(u) is real
        let v = b.cf(&[3.3]) * Complex64::new(0.0, -1.65).exp();
        assert!(v.im.abs() < 1e-14);
    }

    #[test]
    fn mixture_rules() {
        let g = normal_1d(0.5, 2.0).unwrap();
        let single = mixture_cf(&[1.0], vec![g.clone()]).unwrap();
        let double = mixture_cf(&[0.5, 0.5], vec![g.clone(), g.clone()]).unwrap();
        for &u in &[0.0, 0.4, 2.2] {
            assert!((single.cf(&[u]) - g.cf(&[u])).norm() < 1e-15);
            assert!((double.cf(&[u]) - g.cf(&[u])).norm() < 1e-15);
        }
        let mix = by_name("MixNN", &ModelParams::default()).unwrap();
        assert!((mix.cf(&[0.0, 0.0]) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(mixture_cf(&[0.3, 0.3], vec![g.clone(), g.clone()]).is_err());
        assert!(mixture_cf(&[1.0], vec![]).is_err());
        assert!(mixture_cf(&[0.5, 0.5], vec![g, mix]).is_err());
    }

    #[test]
    fn linear_transform_rules() {
        let y = product_model(vec![gamma_cf(5.0, 1.0).unwrap(), beta22_cf_model()]).unwrap();
        let id = linear_transform(&y, &DMatrix::identity(2, 2)).unwrap();
        let u = [0.8, -2.5];
        assert!((id.cf(&u) - y.cf(&u)).norm() < 1e-15);
        let gb = gb();
        let expected = gamma_cf(5.0, 1.0).unwrap().cf(&[1.0]) * beta22_cf_model().cf(&[0.1]);
        assert!((gb.cf(&[1.0, 0.0]) - expected).norm() < 1e-15);
        if let Family::Linear { abs_det, .. } = gb.family() {
            assert!((abs_det - 0.98).abs() < 1e-15);
        } else {
            panic!("GB must be a linear transform");
        }
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(linear_transform(&y, &singular).is_err());
    }

    #[test]
    fn density_integrates_to_one_1d() {
        let rule = GaussLegendre::new(40);
        for name in ["Gamma32", "Mix1D"] {
            let m = by_name(name, &ModelParams::default()).unwrap();
            let (lo, hi) = m.plot_box()[0];
            let total = rule.integrate_panels(lo, hi, 400, |x| m.density(&[x]));
            assert!((total - 1.0).abs() < 1e-6, "{name}: {total}");
        }
        let b = beta22_cf_model();
        assert!((rule.integrate(0.0, 1.0, |x| b.density(&[x])) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn quantile_roundtrip_1d() {
        for name in ["Gamma32", "Mix1D"] {
            let m = by_name(name, &ModelParams::default()).unwrap();
            for &p in &[1e-4, 0.01, 0.25, 0.5, 0.9, 0.999, 1.0 - 1e-4] {
                let x = m.quantile(p).unwrap();
                assert!((m.cdf(x).unwrap() - p).abs() < 1e-8, "{name} p={p}");
            }
        }
        let b = beta22_cf_model();
        assert!((b.quantile(0.5).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gamma_convention_switch() {
        let params = ModelParams {
            gamma_convention: GammaConvention::ShapeRate,
            ..ModelParams::default()
        };
        let m = by_name("Gamma32", &params).unwrap();
        assert_eq!(m.family(), &Family::Gamma { shape: 3.0, scale: 0.5 });
        assert!(by_name("nope", &params).is_err());
    }

    #[test]
    fn example1_identity() {
        let ex = example1_model(2.0, 1.0, 2.0, -1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let au: Vec<f64> = (0..2)
                .map(|r| (0..2).map(|c| ex.companion[(r, c)] * u[c]).sum())
                .collect();
            let lhs = ex.model.cf_energy_density(&au);
            let rhs = (1.0 + u[0] * u[0]).powf(-2.5) * (1.0 + u[1] * u[1]).powf(-1.5);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.max(1e-300) + 1e-300);
            let direct = (1.0 + (2.0 * u[0] - u[1]).powi(2)).powf(-2.5) * (1.0 + 4.0 * u[1] * u[1]).powf(-1.5);
            assert!((ex.model.cf_energy_density(&u) - direct).abs() < 1e-12 * direct);
        }
        assert!(ex.companion_in_class);
        assert!(!ex.in_stated_range);
        assert!(example1_model(1.0, 2.0, 2.0, -1.0).is_err());
        assert!(example1_model(2.0, 1.0, 0.5, -1.0).is_err());
        assert!(example1_model(2.0, 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn bias_quadrature_limits() {
        let g = normal_1d(0.0, 1.0).unwrap();
        // full energy sqrt(pi) when nothing is retained
        let full = bias_quadrature(&g, &[0.0], None, 12.0).unwrap();
        assert!((full - PI.sqrt()).abs() < 1e-10);
        let none = bias_quadrature(&g, &[11.9], None, 12.0).unwrap();
        assert!(none < 1e-30);
        assert!(bias_quadrature(&g, &[13.0], None, 12.0).is_err());
        let n = by_name("N", &ModelParams::default()).unwrap();
        let full2 = bias_quadrature(&n, &[0.0, 0.0], None, 15.0).unwrap();
        assert!((full2 / n.energy() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tail_energy_bounds_hold() {
        let rule = GaussLegendre::new(30);
        let gam = gamma_cf(3.0, 2.0).unwrap();
        for &u in &[1.0, 3.0, 10.0] {
            let exact = 2.0 * rule.integrate_panels(u, 2000.0, 4000, |t| gam.cf_energy_density(&[t]));
            assert!(gam.cf_tail_energy(&[u]) >= exact * (1.0 - 1e-9));
        }
        let b = beta22_cf_model();
        for &u in &[5.0, 20.0] {
            let exact = 2.0 * rule.integrate_panels(u, 3000.0, 6000, |t| b.cf_energy_density(&[t]));
            assert!(b.cf_tail_energy(&[u]) >= exact);
        }
        let model = gb();
        let at_origin = model.cf_tail_energy(&[1e-6, 1e-6]);
        assert!(at_origin <= model.energy() * (1.0 + 1e-12));
        assert!(model.cf_tail_energy(&[30.0, 80.0]) < 1e-3 * model.energy());
    }

    #[test]
    fn samplers_reproducible_and_sane() {
        let model = gb();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::new();
            for _ in 0..20000 {
                model.sample(&mut rng, &mut out);
            }
            out
        };
        let a = draw(11);
        assert_eq!(a, draw(11));
        let mean0 = a.iter().step_by(2).sum::<f64>() / 20000.0;
        assert!((mean0 - 5.05).abs() < 0.05, "{mean0}");
    }
}
