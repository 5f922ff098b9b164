//! `privform`: analyze, simulate and co-design private formation-control
//! networks from a TOML config.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 infeasible
//! co-design problem, 4 unstable step size, 5 solver did not converge.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Outcome;
use config::RunConfig;
use privform_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_UNSTABLE: u8 = 4;
const EXIT_NOT_CONVERGED: u8 = 5;

#[derive(Parser)]
#[command(name = "privform", version, about = "Private formation control: analysis, simulation and co-design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact steady-state covariance and error bound.
    Analyze(Common),
    /// Monte Carlo simulation compared against the exact steady state.
    Simulate(Common),
    /// Co-design edge weights and privacy levels.
    Codesign(Common),
    /// Repeat co-design over one parameter.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of simulation trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the simulation horizon.
    #[arg(long)]
    horizon: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::UnstableStepSize { .. } => EXIT_UNSTABLE,
        Error::NonConvergence { .. } => EXIT_NOT_CONVERGED,
        Error::Parse(_)
        | Error::Io(_)
        | Error::InvalidGraph(_)
        | Error::InvalidPrivacy(_)
        | Error::InvalidScenario(_)
        | Error::Domain(_)
        | Error::DimensionMismatch(_)
        | Error::Disconnected { .. } => EXIT_CONFIG,
    }
}

type Action = fn(&RunConfig, &Path) -> Result<Outcome, Error>;

fn run(cli: Cli) -> Result<Outcome, Error> {
    let (common, action): (&Common, Action) = match &cli.command {
        Command::Analyze(c) => (c, commands::analyze),
        Command::Simulate(c) => (c, commands::simulate_cmd),
        Command::Codesign(c) => (c, commands::codesign),
        Command::Sweep(c) => (c, commands::sweep_cmd),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = common.trials {
        cfg.simulation.trials = t;
    }
    if let Some(h) = common.horizon {
        cfg.simulation.horizon = h;
    }
    std::fs::create_dir_all(&common.out).map_err(|e| Error::Io(format!("{}: {e}", common.out.display())))?;
    action(&cfg, &common.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("privform: solver stopped before converging");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Ok(Outcome::Infeasible) => {
            eprintln!("privform: at least one sweep point is infeasible");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(e) => {
            eprintln!("privform: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
