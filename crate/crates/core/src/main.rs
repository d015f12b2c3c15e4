use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use oulab::harness::{self, Config, Format};
use oulab::oracle;
use oulab::ou_field::FieldState;
use oulab::spectra::{build_modeset, covariance, effective_diffusivity, ExponentChoice};
use oulab::transport::{FlowIntegrator, ScalarGrid};
use oulab::{Error, Result};

#[derive(Parser)]
#[command(name = "oulab", version, about = "OU velocity fields, scalar transport and the white-noise limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a stationary field, write its snapshot and compare the mode-sum
    /// covariance with quadrature.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One transport run: `<T_t, theta>` in a single field realization.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Defaults to the last epsilon of the schedule.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 16)]
        samples: usize,
    },
    /// Predictions of the limiting model.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full epsilon sweep with reports.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Run even if the schedule violates its condition.
        #[arg(long)]
        allow_violation: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify the configured schedule.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-emit CSV and plot files from a saved JSON report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn formats(cfg: &Config) -> Vec<Format> {
    cfg.output.formats.iter().filter_map(|f| Format::parse(f)).collect()
}

fn print(v: serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
    Ok(())
}

fn synth(cfg: &Config, seed: u64, epsilon: f64, out: &Option<PathBuf>) -> Result<()> {
    let p = &cfg.spectrum;
    let ms = build_modeset(p, ExponentChoice::Base, cfg.transport.shells, cfg.transport.dirs_per_shell)?;
    let field = FieldState::init_stationary(ms, epsilon, seed)?;
    if let Some(path) = out {
        field.snapshot().write_to(std::io::BufWriter::new(std::fs::File::create(path)?))?;
    }
    let mut checks = Vec::new();
    for r in [0.0, 0.1, 0.5, 2.0, 10.0] {
        let mut sep = vec![0.0; p.dim];
        sep[0] = r;
        let modes = field.modeset().covariance(&sep);
        let exact = covariance(p, ExponentChoice::Base, &sep)?;
        checks.push(json!({
            "r": r,
            "mode_sum": modes.data(),
            "quadrature": exact.data(),
            "max_abs_diff": modes.max_abs_diff(&exact),
        }));
    }
    print(json!({
        "modes": field.modeset().len(),
        "epsilon": epsilon,
        "rms_speed": field.rms_speed(),
        "snapshot": out.as_ref().map(|p| p.display().to_string()),
        "covariance_check": checks,
    }))
}

fn simulate(cfg: &Config, seed: u64, epsilon: Option<f64>, samples: usize) -> Result<()> {
    let eps = epsilon.unwrap_or(*cfg.schedule.epsilons.last().unwrap());
    let p = cfg.schedule.params_at(&cfg.spectrum, eps);
    let ms = build_modeset(&p, ExponentChoice::Base, cfg.transport.shells, cfg.transport.dirs_per_shell)?;
    let field = FieldState::init_stationary(ms, eps, seed)?;
    let t0 = cfg.observables.initial()?;
    let theta = cfg.observables.test_function()?;
    let grid = ScalarGrid::for_observable(&theta, cfg.transport.grid_spacing)?;
    let integ = FlowIntegrator {
        kappa: p.kappa,
        dt: cfg.transport.dt,
        max_step_fraction: cfg.transport.max_step_fraction,
    };
    let res = integ.weak_observable(&field, &theta, &t0, cfg.transport.horizon, &grid, samples, seed)?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    let path = cfg.output.dir.join("scalar_grid.csv");
    res.grid.write_csv(&path)?;
    print(json!({
        "epsilon": eps,
        "ell1": p.ell1,
        "kappa": p.kappa,
        "weak_observable": res.estimate.value,
        "stderr": res.estimate.stderr,
        "bound": t0.sup_abs() * theta.l1_norm(p.dim),
        "grid_csv": path.display().to_string(),
    }))
}

fn oracle_cmd(cfg: &Config, seed: u64) -> Result<()> {
    let limit = cfg.schedule.limit_params(&cfg.spectrum);
    let keff = effective_diffusivity(&limit)?;
    let mut r0 = vec![0.0; limit.dim];
    r0[0] = cfg.transport.pair_separation;
    let curve = oracle::pair_dispersion_curve(
        &limit,
        &r0,
        &cfg.transport.pair_times,
        cfg.transport.dt,
        cfg.transport.oracle_samples,
        seed,
    )?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    let path = cfg.output.dir.join("pair_dispersion.csv");
    curve.write_csv(&path)?;
    let t0 = cfg.observables.initial()?;
    let center = vec![0.0; limit.dim];
    let mean = oracle::mean_scalar_exact(&t0, &limit, cfg.transport.horizon, &center).ok();
    print(json!({
        "ell1": limit.ell1,
        "kappa0": limit.kappa0,
        "effective_diffusivity": keff.data(),
        "dispersion_slope": keff.trace(),
        "mean_scalar_at_origin": mean,
        "pair_dispersion_csv": path.display().to_string(),
    }))
}

fn sweep(cfg: &Config, seed: u64, allow: bool, out: &Option<PathBuf>) -> Result<()> {
    let workers = harness::workers_from_env()?;
    let started = Instant::now();
    let report = harness::run_sweep(cfg, seed, workers, allow)?;
    let dir = out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let files = harness::report_emit(&report, &dir, &formats(cfg))?;
    // wall time stays out of the report so its bytes depend only on config and seed
    let timing = json!({ "wall_seconds": started.elapsed().as_secs_f64(), "workers": workers });
    std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
    let failed: Vec<_> = report.rows.iter().filter_map(|r| r.error.clone()).collect();
    print(json!({
        "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
        "gaps": report.gaps.iter().map(|g| json!({"statistic": g.statistic, "relative": g.relative, "monotone": g.monotone})).collect::<Vec<_>>(),
        "fk_violations": report.fk_violations(),
        "row_errors": failed,
        "wall_seconds": timing["wall_seconds"],
    }))?;
    if let Some(e) = report.oracle.as_ref().and_then(|o| o.error.clone()) {
        return Err(Error::Numerical(format!("oracle failed: {e}")));
    }
    if !failed.is_empty() {
        return Err(Error::Numerical(format!("{} sweep rows failed", failed.len())));
    }
    Ok(())
}

fn validate(cfg: &Config) -> Result<()> {
    let verdict = harness::validate_schedule(&cfg.spectrum, &cfg.schedule);
    print(serde_json::to_value(&verdict)?)?;
    verdict.into_result().map(|_| ())
}

fn report(input: &Path, out: &Path) -> Result<()> {
    let rep = harness::read_report(input)?;
    let files = harness::report_emit(&rep, out, &[Format::Csv, Format::Json, Format::Plot])?;
    print(json!({ "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>() }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, seed, epsilon, out } => synth(&load(&config)?, seed, epsilon, &out),
        Command::Simulate { config, seed, epsilon, samples } => simulate(&load(&config)?, seed, epsilon, samples),
        Command::Oracle { config, seed } => oracle_cmd(&load(&config)?, seed),
        Command::Sweep { config, seed, allow_violation, out } => sweep(&load(&config)?, seed, allow_violation, &out),
        Command::Validate { config } => validate(&load(&config)?),
        Command::Report { input, out } => report(&input, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
