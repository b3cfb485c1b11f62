mod args;
mod commands;
mod error;
mod input;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => commands::cmd_estimate(a),
        Command::Bandwidth(a) => commands::cmd_bandwidth(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Policy(a) => commands::cmd_policy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
