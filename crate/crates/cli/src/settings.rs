//! Resolved run parameters. A config file supplies a [`Settings`] table and
//! command-line flags override it; the resolved value is written back as the
//! run manifest, which can be fed to `--config` to repeat the run.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use ecf_density::pipeline::{EstimatorConfig, KappaMode};
use ecf_density::sim::{ChainConfig, ChainKind};
use ecf_density::{DomainKind, GammaConvention, KappaScan, ModelParams, RuleKind, StabilizationStep};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{config, runtime, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub command: Option<String>,
    pub model: Option<String>,
    pub input: Option<PathBuf>,
    pub n: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Spatial lattice for `estimate`.
    pub points: Option<Vec<usize>>,
    pub x_lo: Option<Vec<f64>>,
    pub x_hi: Option<Vec<f64>>,
    pub params: ModelParams,
    pub chain: ChainConfig,
    pub estimator: EstimatorConfig,
}

/// Flags shared by the sample-driven subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML settings file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: `<out>.manifest.toml`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Target model: N, MixNN, GB, Gamma32, Mix1D, Example1.
    #[arg(long, visible_alias = "target")]
    pub model: Option<String>,
    /// CSV of observations, one row each.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sampling scheme: iid, doukhan, dyadic-ar.
    #[arg(long)]
    pub kind: Option<String>,
    /// Doukhan mixing exponent.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Threshold rule: sqrt-log, log, u-dependent.
    #[arg(long)]
    pub rule: Option<String>,
    /// Fixed kappa; disables the adaptive scan.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub kappa_max: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// How chi_{kappa-1} is read: index or unit.
    #[arg(long)]
    pub stabilization_step: Option<String>,
    /// Fixed frequency half-widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub extent: Option<Vec<f64>>,
    /// Frequency spacing per axis, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub spacing: Option<Vec<f64>>,
    /// Integration domain: full-box or hyperbolic-dn.
    #[arg(long)]
    pub domain: Option<String>,
    /// shape-scale or shape-rate.
    #[arg(long)]
    pub gamma_convention: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub points: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub x_lo: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub x_hi: Option<Vec<f64>>,
    /// Example1 shape parameters and shear.
    #[arg(long)]
    pub ex_alpha: Option<f64>,
    #[arg(long)]
    pub ex_beta: Option<f64>,
    #[arg(long)]
    pub ex_a: Option<f64>,
    #[arg(long)]
    pub ex_b: Option<f64>,
}

pub fn parse_enum<T: std::str::FromStr>(s: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(config)
}

/// Loads a TOML file into `T`.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
}

impl RunArgs {
    /// Settings from the config file (if any) with flags applied on top.
    pub fn resolve(&self, command: &str) -> CliResult<Settings> {
        let mut s: Settings = match &self.config {
            Some(p) => load_toml(p)?,
            None => Settings::default(),
        };
        if let Some(c) = &s.command {
            if c != command {
                return Err(config(format!("config was written for `{c}`, not `{command}`")));
            }
        }
        s.command = Some(command.to_string());
        if self.model.is_some() {
            s.model.clone_from(&self.model);
        }
        if self.input.is_some() {
            s.input.clone_from(&self.input);
        }
        if self.n.is_some() {
            s.n = self.n;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if self.out.is_some() {
            s.out.clone_from(&self.out);
        }
        if self.points.is_some() {
            s.points.clone_from(&self.points);
        }
        if self.x_lo.is_some() {
            s.x_lo.clone_from(&self.x_lo);
        }
        if self.x_hi.is_some() {
            s.x_hi.clone_from(&self.x_hi);
        }

        if let Some(k) = &self.kind {
            s.chain.kind = parse_enum::<ChainKind>(k)?;
        }
        if let Some(a) = self.a {
            s.chain.a = a;
        }
        if let Some(b) = self.burn_in {
            s.chain.burn_in = b;
        }

        let p = &mut s.params;
        if let Some(g) = &self.gamma_convention {
            p.gamma_convention = parse_enum::<GammaConvention>(g)?;
        }
        if let Some(v) = self.ex_alpha {
            p.alpha = v;
        }
        if let Some(v) = self.ex_beta {
            p.beta = v;
        }
        if let Some(v) = self.ex_a {
            p.a = v;
        }
        if let Some(v) = self.ex_b {
            p.b = v;
        }

        let e = &mut s.estimator;
        if let Some(r) = &self.rule {
            e.rule = parse_enum::<RuleKind>(r)?;
        }
        if let Some(d) = &self.domain {
            e.domain = parse_enum::<DomainKind>(d)?;
        }
        if self.extent.is_some() {
            e.grid.extent.clone_from(&self.extent);
        }
        if self.spacing.is_some() {
            e.grid.spacing.clone_from(&self.spacing);
        }
        let scan_flags = self.delta.is_some()
            || self.kappa_max.is_some()
            || self.window.is_some()
            || self.stabilization_step.is_some();
        match (self.kappa, scan_flags) {
            (Some(_), true) => {
                return Err(CliError::Usage("--kappa fixes kappa and cannot be combined with scan flags".into()))
            }
            (Some(kappa), false) => e.kappa = KappaMode::Fixed { kappa },
            (None, true) => {
                let mut scan = match e.kappa {
                    KappaMode::Adaptive(scan) => scan,
                    KappaMode::Fixed { .. } => KappaScan::default(),
                };
                if let Some(v) = self.delta {
                    scan.delta = v;
                }
                if let Some(v) = self.kappa_max {
                    scan.kappa_max = v;
                }
                if let Some(v) = self.window {
                    scan.window = v;
                }
                if let Some(v) = &self.stabilization_step {
                    scan.step = parse_enum::<StabilizationStep>(v)?;
                }
                scan.validate().map_err(config)?;
                e.kappa = KappaMode::Adaptive(scan);
            }
            (None, false) => {}
        }
        Ok(s)
    }
}

/// `# ecfd <version> run-manifest` followed by the TOML of `value`.
pub fn manifest_text<T: Serialize>(value: &T) -> CliResult<String> {
    let body = toml::to_string(value).map_err(runtime)?;
    Ok(format!("# ecfd {} run-manifest\n{body}", env!("CARGO_PKG_VERSION")))
}

pub fn write_manifest<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    fs::write(path, manifest_text(value)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Explicit `--manifest`, else `<out>.manifest.toml`, else none.
pub fn manifest_path(explicit: Option<&Path>, out: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        out.map(|o| {
            let mut name = o.as_os_str().to_owned();
            name.push(".manifest.toml");
            PathBuf::from(name)
        })
    })
}
