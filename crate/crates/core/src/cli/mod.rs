//! Command-line surface: configs, sweeps, and subcommands.

pub mod commands;
pub mod config;
pub mod sweep;

pub use commands::{run, Cli, CliError, Command};
pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use sweep::{run_sweep, write_csv, SweepOptions, SweepRow};

use clap::Parser;
use std::process::ExitCode;

/// Parses the process arguments, runs the command, and maps errors to a
/// nonzero exit code with the message on standard error.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
