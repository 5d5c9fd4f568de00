mod commands;
mod error;
mod options;

use std::process::ExitCode;

use clap::Parser;

use crate::options::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Coefficients(args) => commands::coefficients(&args),
        Command::VerifyReduction(args) => commands::verify_reduction(&args),
        Command::VerifyLimit(args) => commands::verify_limit(&args),
        Command::ChainGrid(args) => commands::chain_grid(&args),
        Command::Config(args) => commands::config(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
