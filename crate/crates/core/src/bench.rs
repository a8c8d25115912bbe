//! Monte-Carlo risk experiments.
//!
//! A replication draws a path with its own [`RngStream`], fits the thresholded
//! ECF, and scores it with the Parseval risk. Replications run in parallel;
//! aggregation folds them in replication order, so the report depends only on
//! the plan.

use std::io::{self, Write};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{l2_risk_fourier, sobolev_rate, SobolevSpec};
use crate::pipeline::{fit, EstimatorConfig};
use crate::sim::{sample_iid, ChainConfig, ChainKind, RngStream};
use crate::targets::{by_name, ModelParams, TargetModel};

/// Published value for one `(n)` cell, used by [`check_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceCell {
    pub n: usize,
    /// `100 x` mean normalized risk.
    pub risk_x100: f64,
    #[serde(default)]
    pub risk_std_x100: Option<f64>,
    #[serde(default)]
    pub kappa_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub label: Option<String>,
    pub model: String,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub chain: ChainConfig,
    pub n_values: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reference: Vec<ReferenceCell>,
}

impl ExperimentPlan {
    pub fn new(model: &str, chain: ChainConfig, n_values: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            label: None,
            model: model.to_string(),
            params: ModelParams::default(),
            chain,
            n_values,
            replications,
            estimator: EstimatorConfig::default(),
            seed,
            reference: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidParameter(format!("plan: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::InvalidParameter("need at least 2 replications".into()));
        }
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter("n_values must be nonempty with every n >= 2".into()));
        }
        self.chain.validate()?;
        let model = self.target()?;
        self.estimator.grid.validate(model.dim())?;
        if self.chain.kind != ChainKind::Iid && !model.has_quantile() {
            return Err(Error::NoSampler(format!("chain needs a univariate target, `{}` is not", self.model)));
        }
        Ok(())
    }

    pub fn target(&self) -> Result<TargetModel> {
        by_name(&self.model, &self.params)
    }

    /// Label of the sampling scheme, e.g. `doukhan(a=3)`.
    pub fn chain_label(&self) -> String {
        match self.chain.kind {
            ChainKind::Doukhan => format!("doukhan(a={})", self.chain.a),
            kind => kind.to_string(),
        }
    }
}

/// Stream index of replication `r` at the `i`-th sample size.
pub fn stream_id(size_index: usize, replication: usize) -> u64 {
    ((size_index as u64) << 32) | replication as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub model: String,
    pub chain: String,
    pub n: usize,
    pub replication: usize,
    pub risk: f64,
    pub normalized_risk: f64,
    pub norm_f_sq: f64,
    pub tail_correction: f64,
    pub kappa: f64,
    pub stabilized: bool,
    pub boundary_clear: bool,
    pub mask_size: usize,
    pub grid_nodes: usize,
    pub expansions: usize,
    pub error: Option<String>,
}

impl ReplicationRecord {
    /// Counted in the means: no error, stabilized scan, boundary-clear mask.
    pub fn usable(&self) -> bool {
        self.error.is_none() && self.stabilized && self.boundary_clear
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub model: String,
    pub chain: String,
    pub n: usize,
    pub risk_mean: f64,
    pub risk_std: f64,
    pub raw_risk_mean: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
    pub replications: usize,
    pub used: usize,
    pub not_stabilized: usize,
    pub boundary_violations: usize,
    pub errors: usize,
    pub wall_time_s: f64,
}

impl RiskRow {
    pub fn failures(&self) -> usize {
        self.replications - self.used
    }

    pub fn failure_fraction(&self) -> f64 {
        self.failures() as f64 / self.replications as f64
    }

    /// Standard error of the mean normalized risk.
    pub fn risk_se(&self) -> f64 {
        self.risk_std / (self.used.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
    pub records: Vec<ReplicationRecord>,
}

/// Mean and sample standard deviation by Welford's recursion.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        count += 1;
        let delta = x - mean;
        mean += delta / count as f64;
        m2 += delta * (x - mean);
    }
    let std = if count > 1 { (m2 / (count - 1) as f64).sqrt() } else { f64::NAN };
    if count == 0 {
        mean = f64::NAN;
    }
    (mean, std, count)
}

fn replicate(plan: &ExperimentPlan, model: &TargetModel, n: usize, size_index: usize, r: usize) -> ReplicationRecord {
    let mut rec = ReplicationRecord {
        model: model.name().to_string(),
        chain: plan.chain_label(),
        n,
        replication: r,
        risk: f64::NAN,
        normalized_risk: f64::NAN,
        norm_f_sq: f64::NAN,
        tail_correction: f64::NAN,
        kappa: f64::NAN,
        stabilized: false,
        boundary_clear: false,
        mask_size: 0,
        grid_nodes: 0,
        expansions: 0,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let stream = RngStream::new(plan.seed, stream_id(size_index, r));
        let samples = plan.chain.simulate(model, n, stream)?;
        let fitted = fit(&samples, &plan.estimator, Some(model.plot_box()))?;
        let risk = l2_risk_fourier(&fitted.field_tilde, model, &fitted.domain)?;
        rec.risk = risk.risk;
        rec.normalized_risk = risk.normalized_risk;
        rec.norm_f_sq = risk.norm_f_sq;
        rec.tail_correction = risk.tail_correction;
        rec.kappa = fitted.kappa;
        rec.stabilized = fitted.stabilized();
        rec.boundary_clear = fitted.clearance.clear;
        rec.mask_size = fitted.mask.count();
        rec.grid_nodes = fitted.grid().len();
        rec.expansions = fitted.expansions;
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec
}

/// Aggregates the records of one `(model, chain, n)` cell.
pub fn aggregate(records: &[ReplicationRecord], wall_time_s: f64) -> Option<RiskRow> {
    let first = records.first()?;
    let usable: Vec<&ReplicationRecord> = records.iter().filter(|r| r.usable()).collect();
    let (risk_mean, risk_std, used) = mean_std(usable.iter().map(|r| r.normalized_risk));
    let (raw_risk_mean, _, _) = mean_std(usable.iter().map(|r| r.risk));
    let (kappa_mean, kappa_std, _) = mean_std(usable.iter().map(|r| r.kappa));
    Some(RiskRow {
        model: first.model.clone(),
        chain: first.chain.clone(),
        n: first.n,
        risk_mean,
        risk_std,
        raw_risk_mean,
        kappa_mean,
        kappa_std,
        replications: records.len(),
        used,
        not_stabilized: records.iter().filter(|r| r.error.is_none() && !r.stabilized).count(),
        boundary_violations: records.iter().filter(|r| r.error.is_none() && !r.boundary_clear).count(),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        wall_time_s,
    })
}

/// Runs every replication of every sample size in `plan`.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<RiskReport> {
    plan.validate()?;
    let model = plan.target()?;
    let mut rows = Vec::with_capacity(plan.n_values.len());
    let mut records = Vec::with_capacity(plan.n_values.len() * plan.replications);
    for (i, &n) in plan.n_values.iter().enumerate() {
        let start = Instant::now();
        let cell: Vec<ReplicationRecord> = (0..plan.replications)
            .into_par_iter()
            .map(|r| replicate(plan, &model, n, i, r))
            .collect();
        let row = aggregate(&cell, start.elapsed().as_secs_f64()).expect("replications >= 2");
        rows.push(row);
        records.extend(cell);
    }
    Ok(RiskReport { rows, records })
}

/// Writes the per-cell summary CSV.
pub fn write_report_csv<W: Write>(rows: &[RiskRow], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "model,chain,n,risk_mean_x100,risk_std_x100,kappa_mean,kappa_std,failures,replications,not_stabilized,boundary_violations,errors,raw_risk_mean,wall_time_s"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.4},{:.4},{},{},{},{},{},{:.6e},{:.3}",
            r.model,
            r.chain,
            r.n,
            100.0 * r.risk_mean,
            100.0 * r.risk_std,
            r.kappa_mean,
            r.kappa_std,
            r.failures(),
            r.replications,
            r.not_stabilized,
            r.boundary_violations,
            r.errors,
            r.raw_risk_mean,
            r.wall_time_s
        )?;
    }
    Ok(())
}

/// Writes one CSV line per replication.
pub fn write_replications_csv<W: Write>(records: &[ReplicationRecord], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "model,chain,n,replication,risk,normalized_risk,norm_f_sq,tail_correction,kappa,stabilized,boundary_clear,mask_size,grid_nodes,expansions,error"
    )?;
    for r in records {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            out,
            "{},{},{},{},{:e},{:e},{:e},{:e},{},{},{},{},{},{},{}",
            r.model,
            r.chain,
            r.n,
            r.replication,
            r.risk,
            r.normalized_risk,
            r.norm_f_sq,
            r.tail_correction,
            r.kappa,
            r.stabilized,
            r.boundary_clear,
            r.mask_size,
            r.grid_nodes,
            r.expansions,
            err
        )?;
    }
    Ok(())
}

/// Comparison of one reported number with its published value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub n: usize,
    pub quantity: String,
    pub ours: f64,
    pub published: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Tolerance `max(3 standard errors, 25% of the published value)`.
pub fn tolerance(published: f64, standard_error: f64) -> f64 {
    (3.0 * standard_error).max(0.25 * published.abs())
}

/// Checks rows against reference cells: mean risk within tolerance and at most
/// 5% failed replications per cell.
pub fn check_report(rows: &[RiskRow], reference: &[ReferenceCell]) -> Vec<CellCheck> {
    let mut out = Vec::new();
    for cell in reference {
        let Some(row) = rows.iter().find(|r| r.n == cell.n) else {
            out.push(CellCheck {
                n: cell.n,
                quantity: "missing".into(),
                ours: f64::NAN,
                published: cell.risk_x100,
                tolerance: 0.0,
                pass: false,
            });
            continue;
        };
        let ours = 100.0 * row.risk_mean;
        let tol = tolerance(cell.risk_x100, 100.0 * row.risk_se());
        out.push(CellCheck {
            n: cell.n,
            quantity: "risk_x100".into(),
            ours,
            published: cell.risk_x100,
            tolerance: tol,
            pass: (ours - cell.risk_x100).abs() <= tol,
        });
        out.push(CellCheck {
            n: cell.n,
            quantity: "failure_fraction".into(),
            ours: row.failure_fraction(),
            published: 0.05,
            tolerance: 0.0,
            pass: row.failure_fraction() <= 0.05,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationResult {
    pub empirical_prob: f64,
    pub bound: f64,
    pub events: usize,
    pub trials: usize,
}

/// Frequency of `|ecf(u) - cf(u)| >= b sqrt(ln n / n)` over i.i.d. replications
/// and probe frequencies, next to the bound `4 n^{-b^2 / 4}`.
pub fn deviation_experiment(
    model: &TargetModel,
    n: usize,
    b: f64,
    probes: &[Vec<f64>],
    replications: usize,
    seed: u64,
) -> Result<DeviationResult> {
    if n < 2 || probes.is_empty() || replications == 0 {
        return Err(Error::InvalidParameter("need n >= 2, probes and replications".into()));
    }
    if let Some(p) = probes.iter().find(|p| p.len() != model.dim()) {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: p.len(),
        });
    }
    let nf = n as f64;
    let radius = b * (nf.ln() / nf).sqrt();
    let cfs: Vec<Complex64> = probes.iter().map(|u| model.cf(u)).collect();
    let counts: Vec<usize> = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let s = sample_iid(model, n, RngStream::new(seed, r as u64))?;
            let mut events = 0;
            for (u, cf) in probes.iter().zip(&cfs) {
                let mut acc = Complex64::new(0.0, 0.0);
                for x in s.rows() {
                    let phase: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
                    acc += Complex64::new(phase.cos(), phase.sin());
                }
                if (acc / nf - cf).norm() >= radius {
                    events += 1;
                }
            }
            Ok(events)
        })
        .collect::<Result<_>>()?;
    let events: usize = counts.iter().sum();
    let trials = replications * probes.len();
    Ok(DeviationResult {
        empirical_prob: events as f64 / trials as f64,
        bound: 4.0 * nf.powf(-b * b / 4.0),
        events,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares fit of `ln risk = intercept + slope ln n`. Needs at least three
/// sizes spanning 1.5 decades.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!("rate fit needs at least 3 sizes, got {}", points.len())));
    }
    if points.iter().any(|&(n, r)| !(n > 0.0) || !(r > 0.0)) {
        return Err(Error::InvalidParameter("rate fit needs positive sizes and risks".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if (hi / lo).log10() < 1.5 - 1e-12 {
        return Err(Error::InvalidParameter("rate fit needs sizes spanning 1.5 decades".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(LogLogFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudy {
    pub table: Vec<(usize, f64)>,
    pub fit: LogLogFit,
    /// `-2 s_bar / (2 s_bar + 1)`.
    pub theoretical_slope: f64,
    pub report: RiskReport,
}

/// Runs `plan` and compares the fitted risk slope with the Sobolev exponent of `s`.
pub fn rate_study(plan: &ExperimentPlan, s: &[f64]) -> Result<RateStudy> {
    let spec = SobolevSpec::new(s.to_vec(), 1.0, None)?;
    let theory = sobolev_rate(&spec, 2.0)?;
    let sizes: Vec<(f64, f64)> = plan.n_values.iter().map(|&n| (n as f64, 1.0)).collect();
    fit_loglog_slope(&sizes)?;
    let report = run_experiment(plan)?;
    let table: Vec<(usize, f64)> = report.rows.iter().map(|r| (r.n, r.risk_mean)).collect();
    let points: Vec<(f64, f64)> = table.iter().map(|&(n, r)| (n as f64, r)).collect();
    Ok(RateStudy {
        fit: fit_loglog_slope(&points)?,
        table,
        theoretical_slope: -theory.rate_exponent,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::KappaMode;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, 7.0, 3.25];
        let (m, s, c) = mean_std(xs);
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert_eq!(c, 5);
        assert!((m - mean).abs() < 1e-15);
        assert!((s - var.sqrt()).abs() < 1e-14);
        assert!(mean_std([]).0.is_nan());
    }

    #[test]
    fn exact_power_law_slope() {
        let pts: Vec<(f64, f64)> = [1e3, 1e4, 1e5].iter().map(|&n: &f64| (n, n.powf(-0.5))).collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit_loglog_slope(&pts[..2]).is_err());
        let narrow: Vec<(f64, f64)> = [1e3, 2e3, 4e3].iter().map(|&n| (n, 1.0 / n)).collect();
        assert!(fit_loglog_slope(&narrow).is_err());
    }

    #[test]
    fn deviation_trivial_bounds() {
        let g = crate::targets::normal_1d(0.0, 1.0).unwrap();
        let probes = vec![vec![0.5], vec![1.5]];
        let zero = deviation_experiment(&g, 50, 0.0, &probes, 10, 1).unwrap();
        assert_eq!(zero.bound, 4.0);
        assert!(zero.empirical_prob <= zero.bound);
        let big = deviation_experiment(&g, 2, 10.0, &probes, 200, 1).unwrap();
        assert!(big.bound < 1e-6);
        assert_eq!(big.events, 0);
    }

    #[test]
    fn plan_round_trip_and_validation() {
        let mut plan = ExperimentPlan::new("Gamma32", ChainConfig::doukhan(3.0), vec![500, 2000], 50, 9);
        plan.estimator.kappa = KappaMode::Fixed { kappa: 0.8 };
        plan.reference.push(ReferenceCell {
            n: 500,
            risk_x100: 1.66,
            risk_std_x100: Some(0.88),
            kappa_mean: None,
        });
        let text = plan.to_toml_string().unwrap();
        assert_eq!(ExperimentPlan::from_toml_str(&text).unwrap(), plan);
        plan.replications = 1;
        assert!(plan.validate().is_err());
        let bad = ExperimentPlan::new("N", ChainConfig::dyadic_ar(0), vec![100], 5, 0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_experiment_is_deterministic() {
        let plan = ExperimentPlan::new("Mix1D", ChainConfig::iid(), vec![300], 4, 17);
        let a = run_experiment(&plan).unwrap();
        let b = run_experiment(&plan).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.rows[0].replications, 4);
        let again = aggregate(&a.records, 0.0).unwrap();
        assert_eq!(again.risk_mean, a.rows[0].risk_mean);
    }

    #[test]
    fn tolerance_policy() {
        assert_eq!(tolerance(1.0, 0.01), 0.25);
        assert_eq!(tolerance(1.0, 0.2), 0.6000000000000001);
    }
}
