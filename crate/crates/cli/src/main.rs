mod args;
mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Tstats(a) => commands::tstats(a),
        Command::Summary(a) => commands::summary(a),
        Command::Bound(a) => commands::bound(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Control(a) => commands::control(a),
        Command::Bonferroni(a) => commands::bonferroni(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Hlz(a) => commands::hlz(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
