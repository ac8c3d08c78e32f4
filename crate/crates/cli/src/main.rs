//! `proctor`: adaptive benchmark evaluation from the command line.
//!
//! Exit codes: 0 success, 1 input/validation error, 2 numerical failure,
//! 3 respondent or judge-endpoint failure.

mod commands;
mod manifest;
mod report;
mod sessions;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "proctor",
    version,
    about = "Adaptive benchmark evaluation: calibrate question difficulty, interview models with ability-matched diverse subsets, score ranking consistency"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit question difficulties to offline responses
    Calibrate(commands::calibrate::CalibrateArgs),
    /// Run adaptive evaluation sessions against a respondent
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Generate a synthetic world; optionally run an experiment on it
    Simulate(commands::simulate::SimulateArgs),
    /// Run a non-adaptive selection baseline over offline responses
    Baseline(commands::baseline::BaselineArgs),
    /// Merge run reports into mean/std/CI tables or a ratio-sweep CSV
    Report(commands::report::ReportArgs),
}

fn exit_class(error: &anyhow::Error) -> u8 {
    match error.downcast_ref::<proctor_core::Error>() {
        Some(proctor_core::Error::Numerical { .. }) => 2,
        Some(proctor_core::Error::Judge(_)) | Some(proctor_core::Error::Respondent { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Calibrate(args) => commands::calibrate::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Baseline(args) => commands::baseline::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_class(&e))
        }
    }
}
