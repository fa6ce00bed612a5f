//! `drofolio` command-line tool.

mod args;
mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use args::{Cli, Command};
use config::RunConfig;
use error::{CliError, CliResult};

const THREADS_VAR: &str = "DROFOLIO_THREADS";

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_env("DROFOLIO_LOG").unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: &Cli) -> CliResult<()> {
    init_threads()?;
    match &cli.command {
        Command::Estimate(a) => commands::estimate(&RunConfig::estimate(a)?),
        Command::CalibrateUncertainty(a) => commands::calibrate_uncertainty(&RunConfig::calibrate(a)?),
        Command::Allocate(a) => commands::allocate(&RunConfig::allocate(a)?),
        Command::Backtest(a) => commands::backtest(&RunConfig::backtest(a)?),
        Command::Simulate(a) => commands::simulate(&RunConfig::simulate(a)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drofolio: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
