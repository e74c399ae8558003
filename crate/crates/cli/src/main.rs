//! `poisrelax`: deterministic sweeps over Poisson relaxations.
//!
//! Every command writes one tidy table (CSV or JSON) and a
//! `<output>.manifest.json` sidecar. Settings come from flags, a JSON file
//! with the same keys (`--config`), or both; flags win.
//!
//! Exit status: 0 on success, 2 for invalid configuration, 3 when a
//! computation fails (the message names the condition).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{fidelity, gradsweep, invoke_with_file, moments, regression, run_file, train};
use config::CliError;

#[derive(Parser)]
#[command(name = "poisrelax", version, about = "Sweeps over differentiable Poisson relaxations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mean and variance factors of the soft indicators.
    Moments {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: moments::MomentsArgs,
    },
    /// Relaxed vs exact sample moments and Wasserstein distances.
    Fidelity {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: fidelity::FidelityArgs,
    },
    /// Bias, noise and alignment of log-rate gradients at fixed rates.
    Gradsweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: gradsweep::GradSweepArgs,
    },
    /// Train linear Poisson VAEs; one row per epoch per run.
    TrainPvae {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: train::TrainPvaeArgs,
    },
    /// Scalar gradient benchmark: MAE against the exact gradient.
    BenchRegression {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: regression::BenchRegressionArgs,
    },
    /// Run whatever command a config file (or a manifest) describes.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Moments { config, args } => invoke_with_file::<moments::Moments>(&args, config.as_deref()),
        Cmd::Fidelity { config, args } => invoke_with_file::<fidelity::Fidelity>(&args, config.as_deref()),
        Cmd::Gradsweep { config, args } => invoke_with_file::<gradsweep::GradSweep>(&args, config.as_deref()),
        Cmd::TrainPvae { config, args } => invoke_with_file::<train::TrainPvae>(&args, config.as_deref()),
        Cmd::BenchRegression { config, args } => {
            invoke_with_file::<regression::BenchRegression>(&args, config.as_deref())
        }
        Cmd::Run { config } => run_file(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("poisrelax: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
