//! Command-line front end for resonator-detection experiments.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{parse_basis, RunConfig};

#[derive(Parser)]
#[command(
    name = "rdsim",
    about = "Simulate and reconstruct two-mode sideband states measured by phase-coherent resonator detection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON run configuration; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Scan RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Detuning grid as start:end:count.
    #[arg(long)]
    grid: Option<String>,
    /// Sideband offset Ω/γ.
    #[arg(long)]
    omega_ratio: Option<f64>,
    /// Impedance matching parameter.
    #[arg(long)]
    d: Option<f64>,
    /// Mode mismatch fraction f².
    #[arg(long)]
    f2: Option<f64>,
    /// Basis for printed summaries: sideband or sa.
    #[arg(long)]
    basis: Option<String>,
    /// SQL-normalize predicted-moment exports.
    #[arg(long)]
    normalized: Option<bool>,
    /// Θ values per detuning in the tomography export.
    #[arg(long)]
    theta_count: Option<usize>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            config.scan.seed = seed;
        }
        if let Some(grid) = &self.grid {
            config.grid = grid.clone();
        }
        if let Some(omega_ratio) = self.omega_ratio {
            config.resonator.omega_ratio = omega_ratio;
        }
        if let Some(d) = self.d {
            config.resonator.d = d;
        }
        if let Some(f2) = self.f2 {
            config.resonator.f2 = f2;
        }
        if let Some(basis) = &self.basis {
            config.basis = parse_basis(basis)?;
        }
        if let Some(normalized) = self.normalized {
            config.normalized = normalized;
        }
        if let Some(theta_count) = self.theta_count {
            config.theta_count = theta_count;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Raw scan CSV produced by `simulate`.
    #[arg(long)]
    scan: PathBuf,
    /// DC profile CSV for calibration.
    #[arg(long)]
    dc: Option<PathBuf>,
    /// Previously saved calibration JSON (skips the DC fit).
    #[arg(long)]
    calib: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit transfer and observable coefficient curves.
    Coeffs(CommonArgs),
    /// Simulate a full scan: raw samples, binned moments, DC profile.
    Simulate(CommonArgs),
    /// Reconstruct the state from scan and DC files.
    Fit(FitArgs),
    /// Simulate at known truth, fit, and report z-scores.
    Roundtrip(CommonArgs),
    /// Identifiability rank diagnostics.
    Rank(CommonArgs),
    /// Sweep the modulation phase and fit each state's means.
    PhiSweep(CommonArgs),
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Coeffs(args) => commands::cmd_coeffs(&args.resolve()?, &args.out),
        Command::Simulate(args) => commands::cmd_simulate(&args.resolve()?, &args.out),
        Command::Fit(args) => {
            let config = args.common.resolve()?;
            commands::cmd_fit(
                &config,
                &args.scan,
                args.dc.as_deref(),
                args.calib.as_deref(),
                &args.common.out,
            )
        }
        Command::Roundtrip(args) => commands::cmd_roundtrip(&args.resolve()?, &args.out),
        Command::Rank(args) => commands::cmd_rank(&args.resolve()?, &args.out),
        Command::PhiSweep(args) => commands::cmd_phi_sweep(&args.resolve()?, &args.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<rdsim::Error>() {
                Some(rdsim::Error::CalibrationFailure(_)) => 2,
                Some(rdsim::Error::ModelMismatch(_)) => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
