use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sbridge_cli::{run, Command};

/// Schrödinger bridges, covariance steering and transport experiments.
///
/// Exit codes: 0 success, 1 i/o failure, 2 invalid config or problem,
/// 3 solver did not converge (see diagnostic.json).
#[derive(Parser)]
#[command(name = "sbridge", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Bridge over a finite-state Markov chain.
    BridgeDiscrete { config: PathBuf },
    /// Finite-horizon Gaussian covariance steering.
    BridgeGauss { config: PathBuf },
    /// Stationary covariance maintenance report.
    Maintain { config: PathBuf },
    /// Oscillator cooling plan and simulated tube.
    Cool { config: PathBuf },
    /// Entropic versus displacement interpolation as the noise vanishes.
    LimitStudy { config: PathBuf },
    /// Projective diameter, Birkhoff ratio and Hilbert distance.
    Metric { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, config) = match cli.command {
        Sub::BridgeDiscrete { config } => (Command::BridgeDiscrete, config),
        Sub::BridgeGauss { config } => (Command::BridgeGauss, config),
        Sub::Maintain { config } => (Command::Maintain, config),
        Sub::Cool { config } => (Command::Cool, config),
        Sub::LimitStudy { config } => (Command::LimitStudy, config),
        Sub::Metric { config } => (Command::Metric, config),
    };
    match run(command, &config) {
        Ok(dir) => {
            println!("{}: wrote {}", command.name(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sbridge {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
