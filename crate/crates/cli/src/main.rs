//! `lcc`: calibrate predictor parameters from loss matrices, validate the
//! guarantee on synthetic data, and run end-to-end demos.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Errors raised by the front end itself rather than the library.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("no such input: {}", .0.display())]
    MissingInput(PathBuf),
}

#[derive(Debug, Parser)]
#[command(name = "lcc", version, about = "Loss-controlling calibration over a parameter grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Choose λ* from a loss matrix CSV.
    Calibrate(commands::CalibrateArgs),
    /// Jointly control several losses described by a JSON manifest.
    CalibrateMulti(commands::MultiArgs),
    /// Run a Monte Carlo or split experiment from a JSON config.
    Validate(commands::ValidateArgs),
    /// Self-contained run on synthetic data.
    Demo(commands::DemoArgs),
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Config(_) => EXIT_CONFIG,
                CliError::MissingInput(_) => EXIT_IO,
            };
        }
        if let Some(e) = cause.downcast_ref::<lcc_core::Error>() {
            use lcc_core::Error as E;
            return match e {
                E::Trial { .. } => continue,
                E::Infeasible { .. } | E::InfeasibleMulti { .. } => EXIT_INFEASIBLE,
                E::Io(_) => EXIT_IO,
                _ => EXIT_CONFIG,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate(args) => commands::calibrate(args),
        Command::CalibrateMulti(args) => commands::calibrate_multi(args),
        Command::Validate(args) => commands::validate(args),
        Command::Demo(args) => commands::demo(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
