mod error;
mod io;
mod settings;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecf_density::bench::{
    check_report, rate_study, run_experiment, write_replications_csv, write_report_csv, ExperimentPlan,
};
use ecf_density::estimator::{dn_volume, dn_volume_asymptotic, l2_risk_fourier, sobolev_rate, SobolevSpec};
use ecf_density::pipeline::{data_box, fit, spatial_grid_for, Fit, KappaMode};
use ecf_density::sim::RngStream;
use ecf_density::threshold::{chi_curve, write_chi_csv};
use ecf_density::{by_name, KappaScan, SampleSet, SpatialGrid, TargetModel};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{config, runtime, CliError, CliResult};
use crate::io::{read_samples, with_output, write_samples};
use crate::settings::{load_toml, manifest_path, write_manifest, RunArgs, Settings};

/// Density estimation by thresholded empirical characteristic functions.
#[derive(Debug, Parser)]
#[command(name = "ecfd", version)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "ECFD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit and write density values on a spatial lattice.
    Estimate(RunArgs),
    /// Run the Euler-characteristic kappa scan and print the selection as JSON.
    SelectKappa(RunArgs),
    /// Write the `kappa,chi` curve of the scan.
    EulerCurve(RunArgs),
    /// Write the empirical characteristic function on the fitted grid.
    DumpEcf(RunArgs),
    /// Write the thresholded mask as a PBM bitmap.
    DumpMask(RunArgs),
    /// Draw a sample path.
    Simulate(RunArgs),
    /// Run a Monte-Carlo experiment plan.
    Bench(BenchArgs),
    /// Fit one sample and print its L2 risk against the model as JSON.
    Risk(RunArgs),
    /// Volume of the hyperbolic integration domain.
    DnVolume(DnArgs),
    /// Sobolev rate exponent, or an empirical rate study with `--plan`.
    Rate(RateArgs),
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Directory for report.csv, replications.csv and run-manifest.toml.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Compare against the plan's reference cells; exit 2 on a breach.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
struct DnArgs {
    #[arg(long)]
    n: f64,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Print the leading-order approximation instead.
    #[arg(long)]
    #[serde(default)]
    asymptotic: bool,
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
struct RateArgs {
    /// Smoothness exponents per axis, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    s: Vec<f64>,
    #[arg(long, default_value_t = 1000.0)]
    n: f64,
    /// Direction matrix, row-major, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    matrix: Vec<f64>,
    /// Experiment plan for an empirical log-log slope.
    #[arg(long)]
    #[serde(default)]
    plan: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("ecfd: {}", CliError::Usage(first));
            return ExitCode::from(64);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ecfd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(runtime)?;
    }
    match cli.command {
        Command::Estimate(a) => estimate(&a),
        Command::SelectKappa(a) => select_kappa(&a),
        Command::EulerCurve(a) => euler_curve(&a),
        Command::DumpEcf(a) => dump_ecf(&a),
        Command::DumpMask(a) => dump_mask(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Bench(a) => bench(&a),
        Command::Risk(a) => risk(&a),
        Command::DnVolume(a) => dn(&a),
        Command::Rate(a) => rate(&a),
    }
}

/// Model, samples and settings of a sample-driven run.
struct Prepared {
    settings: Settings,
    model: Option<TargetModel>,
    samples: SampleSet,
}

fn prepare(args: &RunArgs, command: &str, need_model: bool) -> CliResult<Prepared> {
    let settings = args.resolve(command)?;
    let model = settings
        .model
        .as_deref()
        .map(|name| by_name(name, &settings.params))
        .transpose()
        .map_err(config)?;
    if need_model && model.is_none() {
        return Err(config(format!("`{command}` needs --model")));
    }
    settings.chain.validate().map_err(config)?;
    let samples = match (&settings.input, &model) {
        (Some(path), _) => read_samples(path)?,
        (None, Some(m)) => {
            let n = settings.n.ok_or_else(|| config("--n is required when sampling from --model"))?;
            settings.chain.simulate(m, n, RngStream::new(settings.seed, 0)).map_err(config)?
        }
        (None, None) => return Err(config("give --input or --model with --n")),
    };
    if let Some(m) = &model {
        if m.dim() != samples.d() {
            return Err(config(format!("model `{}` has dimension {}, samples have {}", m.name(), m.dim(), samples.d())));
        }
    }
    settings.estimator.grid.validate(samples.d()).map_err(config)?;
    Ok(Prepared { settings, model, samples })
}

impl Prepared {
    fn fit(&self) -> CliResult<Fit> {
        let support = self.model.as_ref().map(|m| m.plot_box());
        fit(&self.samples, &self.settings.estimator, support).map_err(runtime)
    }

    fn finish(&self, args: &RunArgs) -> CliResult<()> {
        match manifest_path(args.manifest.as_deref(), self.settings.out.as_deref()) {
            Some(p) => write_manifest(&self.settings, &p),
            None => Ok(()),
        }
    }
}

fn estimate(args: &RunArgs) -> CliResult<()> {
    let p = prepare(args, "estimate", false)?;
    let d = p.samples.d();
    let s = &p.settings;
    let points = s.points.clone().unwrap_or_else(|| vec![[401, 121, 41][d.min(3) - 1]; d]);
    let x_grid = match (&s.x_lo, &s.x_hi) {
        (Some(lo), Some(hi)) => SpatialGrid::new(lo, hi, &points).map_err(config)?,
        (None, None) => match &p.model {
            Some(m) => spatial_grid_for(m.plot_box(), &points, 0.0),
            None => spatial_grid_for(&data_box(&p.samples), &points, 0.1),
        }
        .map_err(config)?,
        _ => return Err(config("--x-lo and --x-hi go together")),
    };
    let fitted = p.fit()?;
    let est = fitted.density(&x_grid).map_err(runtime)?;
    with_output(s.out.as_deref(), |w| est.write_csv(w))?;
    p.finish(args)
}

fn scan_of(settings: &Settings) -> CliResult<KappaScan> {
    match settings.estimator.kappa {
        KappaMode::Adaptive(scan) => Ok(scan),
        KappaMode::Fixed { .. } => Err(config("the kappa scan needs adaptive mode, drop --kappa")),
    }
}

fn select_kappa(args: &RunArgs) -> CliResult<()> {
    let p = prepare(args, "select-kappa", false)?;
    let scan = scan_of(&p.settings)?;
    let fitted = p.fit()?;
    let g = fitted.grid();
    let body = json!({
        "selected_kappa": fitted.kappa,
        "stabilized": fitted.stabilized(),
        "delta": scan.delta,
        "kappa_max": scan.kappa_max,
        "window": scan.window,
        "n": fitted.n,
        "extent": g.extent(),
        "points": g.points(),
        "expansions": fitted.expansions,
        "boundary_clear": fitted.clearance.clear,
        "mask_size": fitted.mask.count(),
    });
    with_output(p.settings.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &body)?;
        writeln!(w)
    })?;
    p.finish(args)
}

fn euler_curve(args: &RunArgs) -> CliResult<()> {
    let p = prepare(args, "euler-curve", false)?;
    let scan = scan_of(&p.settings)?;
    let fitted = p.fit()?;
    let curve = match &fitted.selection {
        Some(sel) => sel.chi_curve.clone(),
        None => chi_curve(&fitted.ecf, fitted.n, p.settings.estimator.rule, &scan).map_err(runtime)?,
    };
    with_output(p.settings.out.as_deref(), |w| write_chi_csv(&curve, w))?;
    p.finish(args)
}

fn dump_ecf(args: &RunArgs) -> CliResult<()> {
    let p = prepare(args, "dump-ecf", false)?;
    let fitted = p.fit()?;
    with_output(p.settings.out.as_deref(), |w| fitted.ecf.write_csv(w))?;
    p.finish(args)
}

fn dump_mask(args: &RunArgs) -> CliResult<()> {
    let p = prepare(args, "dump-mask", false)?;
    let fitted = p.fit()?;
    with_output(p.settings.out.as_deref(), |w| fitted.mask.write_pbm(w))?;
    p.finish(args)
}

fn simulate(args: &RunArgs) -> CliResult<()> {
    if args.input.is_some() {
        return Err(CliError::Usage("simulate draws samples, --input does not apply".into()));
    }
    let p = prepare(args, "simulate", true)?;
    with_output(p.settings.out.as_deref(), |w| write_samples(&p.samples, w))?;
    p.finish(args)
}

fn risk(args: &RunArgs) -> CliResult<()> {
    let p = prepare(args, "risk", true)?;
    let model = p.model.as_ref().expect("checked by prepare");
    let fitted = p.fit()?;
    let r = l2_risk_fourier(&fitted.field_tilde, model, &fitted.domain).map_err(runtime)?;
    let body = json!({
        "risk": r.risk,
        "norm_f_sq": r.norm_f_sq,
        "normalized_risk": r.normalized_risk,
        "tail_correction": r.tail_correction,
        "kappa_used": fitted.kappa,
    });
    with_output(p.settings.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &body)?;
        writeln!(w)
    })?;
    p.finish(args)
}

fn bench(args: &BenchArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.plan).map_err(|e| config(format!("{}: {e}", args.plan.display())))?;
    let plan = ExperimentPlan::from_toml_str(&text).map_err(config)?;
    if args.check && plan.reference.is_empty() {
        return Err(config("--check needs reference cells in the plan"));
    }
    fs::create_dir_all(&args.out_dir).map_err(|e| runtime(format!("{}: {e}", args.out_dir.display())))?;
    let report = run_experiment(&plan).map_err(runtime)?;
    with_output(Some(&args.out_dir.join("report.csv")), |w| write_report_csv(&report.rows, w))?;
    with_output(Some(&args.out_dir.join("replications.csv")), |w| {
        write_replications_csv(&report.records, w)
    })?;
    write_manifest(&plan, &args.out_dir.join("run-manifest.toml"))?;
    with_output(None, |w| write_report_csv(&report.rows, w))?;
    if args.check {
        let checks = check_report(&report.rows, &plan.reference);
        let mut failed = 0;
        for c in &checks {
            println!(
                "{} n={} {} ours={:.6} published={:.6} tolerance={:.6}",
                if c.pass { "pass" } else { "FAIL" },
                c.n,
                c.quantity,
                c.ours,
                c.published,
                c.tolerance
            );
            failed += usize::from(!c.pass);
        }
        if failed > 0 {
            return Err(CliError::Check(format!("{failed} of {} reference checks outside tolerance", checks.len())));
        }
    }
    Ok(())
}

fn dn(args: &DnArgs) -> CliResult<()> {
    let value = if args.asymptotic {
        dn_volume_asymptotic(args.n, args.d)
    } else {
        dn_volume(args.n, args.d)
    }
    .map_err(config)?;
    println!("{value}");
    if let Some(p) = &args.manifest {
        write_manifest(args, p)?;
    }
    Ok(())
}

fn rate(args: &RateArgs) -> CliResult<()> {
    let body = match &args.plan {
        Some(path) => {
            let plan: ExperimentPlan = load_toml(path)?;
            plan.validate().map_err(config)?;
            let study = rate_study(&plan, &args.s).map_err(runtime)?;
            json!({
                "slope": study.fit.slope,
                "intercept": study.fit.intercept,
                "theoretical_slope": study.theoretical_slope,
                "table": study.table.iter().map(|(n, r)| json!({"n": n, "risk": r})).collect::<Vec<_>>(),
            })
        }
        None => {
            let d = args.s.len();
            let a = if args.matrix.is_empty() {
                None
            } else if args.matrix.len() == d * d {
                Some(DMatrix::from_row_slice(d, d, &args.matrix))
            } else {
                return Err(config(format!("--matrix needs {} entries for {d} axes", d * d)));
            };
            let spec = SobolevSpec::new(args.s.clone(), 1.0, a).map_err(config)?;
            let r = sobolev_rate(&spec, args.n).map_err(config)?;
            json!({
                "s_bar": r.s_bar,
                "rate_exponent": r.rate_exponent,
                "m_star": r.m_star,
                "rate_value": r.rate_value,
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&body).map_err(runtime)?);
    if let Some(p) = &args.manifest {
        write_manifest(args, p)?;
    }
    Ok(())
}
