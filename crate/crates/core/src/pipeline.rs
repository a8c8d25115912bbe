//! End-to-end fitting: grid choice, ECF, kappa choice, thresholding.
//!
//! The frequency spacing follows the spatial width of the data (or a supplied
//! support box) so that the Riemann sums of the inversion and of the Parseval
//! risk do not alias. The extent starts small and grows geometrically until the
//! thresholded mask stays off the outermost grid shell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{boundary_clearance, invert_to_density, BoundaryClearance, DomainKind, IntegrationDomain};
use crate::fourier::{ecf_evaluate, FrequencyGrid, GridField, SampleSet, DEFAULT_NODE_BUDGET};
use crate::estimator::{DensityEstimate, SpatialGrid};
use crate::threshold::{
    apply_threshold, select_kappa, threshold_mask, BinaryMask, KappaScan, KappaSelection, RuleKind, ThresholdRule,
};

/// Fixed threshold constant or Euler-characteristic selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum KappaMode {
    Fixed { kappa: f64 },
    Adaptive(KappaScan),
}

impl Default for KappaMode {
    fn default() -> Self {
        Self::Adaptive(KappaScan::default())
    }
}

/// Frequency-grid policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Fixed half-widths; disables automatic growth.
    pub extent: Option<Vec<f64>>,
    /// Fixed node spacing; otherwise `pi / (oversampling * width)` per axis.
    pub spacing: Option<Vec<f64>>,
    pub oversampling: f64,
    /// Starting half-width is `initial_scale / sd` per axis.
    pub initial_scale: f64,
    pub growth: f64,
    pub max_expansions: usize,
    pub node_budget: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            extent: None,
            spacing: None,
            oversampling: 1.25,
            initial_scale: 3.0,
            growth: 1.25,
            max_expansions: 12,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

impl GridSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        for (name, v) in [("extent", &self.extent), ("spacing", &self.spacing)] {
            if let Some(v) = v {
                if v.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: v.len() });
                }
                if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                    return Err(Error::InvalidGrid(format!("{name} entries must be positive")));
                }
            }
        }
        if !(self.oversampling >= 1.0) || !(self.initial_scale > 0.0) || !(self.growth > 1.0) {
            return Err(Error::InvalidGrid("need oversampling >= 1, initial_scale > 0, growth > 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub rule: RuleKind,
    pub kappa: KappaMode,
    pub grid: GridSpec,
    pub domain: DomainKind,
}

/// Everything produced while fitting one sample.
#[derive(Debug, Clone)]
pub struct Fit {
    pub n: usize,
    pub ecf: GridField<f64>,
    pub selection: Option<KappaSelection<f64>>,
    pub kappa: f64,
    pub mask: BinaryMask<f64>,
    pub field_tilde: GridField<f64>,
    pub clearance: BoundaryClearance,
    pub expansions: usize,
    pub domain: IntegrationDomain,
}

impl Fit {
    pub fn grid(&self) -> &FrequencyGrid<f64> {
        self.ecf.grid()
    }

    /// False only for an adaptive fit whose scan never stabilized.
    pub fn stabilized(&self) -> bool {
        self.selection.as_ref().is_none_or(|s| s.stabilized)
    }

    pub fn density(&self, x_grid: &SpatialGrid<f64>) -> Result<DensityEstimate<f64>> {
        invert_to_density(&self.field_tilde, &self.domain, x_grid)
    }
}

fn axis_stats(samples: &SampleSet<f64>, axis: usize) -> (f64, f64, f64) {
    let col = samples.column(axis);
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (var.sqrt(), lo, hi)
}

/// Node spacing and starting half-width per axis.
pub fn initial_grid_shape(
    samples: &SampleSet<f64>,
    spec: &GridSpec,
    support: Option<&[(f64, f64)]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = samples.d();
    spec.validate(d)?;
    if let Some(s) = support {
        if s.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: s.len() });
        }
    }
    let mut spacing = Vec::with_capacity(d);
    let mut extent = Vec::with_capacity(d);
    for k in 0..d {
        let (sd, lo, hi) = axis_stats(samples, k);
        let mut width = hi - lo;
        if let Some(s) = support {
            width = width.max(s[k].1 - s[k].0);
        }
        if !(width > 0.0) {
            width = 1.0;
        }
        let h = match &spec.spacing {
            Some(v) => v[k],
            None => std::f64::consts::PI / (spec.oversampling * width),
        };
        let sd = if sd > 0.0 { sd } else { width / 4.0 };
        let u = match &spec.extent {
            Some(v) => v[k],
            None => (spec.initial_scale / sd).max(2.0 * h),
        };
        spacing.push(h);
        extent.push(u);
    }
    Ok((spacing, extent))
}

/// Fits the thresholded ECF to `samples`. `support` widens the spacing
/// computation to a known support box (for example a model's plotting box).
pub fn fit(samples: &SampleSet<f64>, config: &EstimatorConfig, support: Option<&[(f64, f64)]>) -> Result<Fit> {
    let n = samples.n();
    if n < 2 {
        return Err(Error::InvalidSamples(format!("need at least 2 samples, got {n}")));
    }
    let d = samples.d();
    let (spacing, mut extent) = initial_grid_shape(samples, &config.grid, support)?;
    let auto = config.grid.extent.is_none();
    let domain = IntegrationDomain::new(config.domain, n);
    let cap = n as f64;
    let mut expansions = 0;
    loop {
        let capped: Vec<f64> = extent.iter().map(|&u| u.min(cap)).collect();
        let grid = FrequencyGrid::from_spacing(&spacing, &capped, config.grid.node_budget)?;
        // from_spacing rounds the extent up to a whole number of steps
        let grid = if grid.max_extent() > cap {
            let shrunk: Vec<f64> = capped
                .iter()
                .zip(&spacing)
                .map(|(&u, &h)| ((u / h).floor().max(1.0)) * h)
                .collect();
            FrequencyGrid::from_spacing(&spacing, &shrunk, config.grid.node_budget)?
        } else {
            grid
        };
        let ecf = ecf_evaluate(samples, &grid)?;
        let (kappa, selection) = match config.kappa {
            KappaMode::Fixed { kappa } => (kappa, None),
            KappaMode::Adaptive(scan) => {
                let sel = select_kappa(&ecf, n, config.rule, &scan)?;
                (sel.selected_kappa, Some(sel))
            }
        };
        let rule = ThresholdRule::new(config.rule, kappa)?;
        let mask = threshold_mask(&ecf, &rule, n)?;
        let clearance = boundary_clearance(&mask, Some(&ecf));
        let at_cap = (0..d).all(|k| grid.extent()[k] + grid.spacing()[k] > cap);
        if clearance.clear || !auto || at_cap || expansions >= config.grid.max_expansions {
            let field_tilde = apply_threshold(&ecf, &mask)?;
            return Ok(Fit {
                n,
                ecf,
                selection,
                kappa,
                mask,
                field_tilde,
                clearance,
                expansions,
                domain,
            });
        }
        // grow only the axes whose boundary faces the mask touches
        let touched = touched_axes(&mask);
        for k in 0..d {
            if touched[k] {
                extent[k] = grid.extent()[k] * config.grid.growth;
            }
        }
        expansions += 1;
    }
}

/// Axes whose lower or upper boundary face carries a mask node.
pub fn touched_axes(mask: &BinaryMask<f64>) -> Vec<bool> {
    let grid = mask.grid();
    let d = grid.dim();
    let mut out = vec![false; d];
    for (i, &b) in mask.bits().iter().enumerate() {
        if b {
            let m = grid.multi_index(i);
            for k in 0..d {
                if m[k] == 0 || m[k] + 1 == grid.points()[k] {
                    out[k] = true;
                }
            }
        }
    }
    out
}

/// Spatial grid spanning `bounds` padded by `pad` of the width on each side.
pub fn spatial_grid_for(bounds: &[(f64, f64)], points: &[usize], pad: f64) -> Result<SpatialGrid<f64>> {
    let padded: Vec<(f64, f64)> = bounds
        .iter()
        .map(|&(lo, hi)| {
            let w = (hi - lo).max(1e-9);
            (lo - pad * w, hi + pad * w)
        })
        .collect();
    SpatialGrid::from_box(&padded, points)
}

/// Bounding box of the samples.
pub fn data_box(samples: &SampleSet<f64>) -> Vec<(f64, f64)> {
    (0..samples.d())
        .map(|k| {
            let (_, lo, hi) = axis_stats(samples, k);
            (lo, hi)
        })
        .collect()
}
