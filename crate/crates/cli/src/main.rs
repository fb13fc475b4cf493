//! `arcshoot solve | detect | verify`.
//!
//! Exit status: 0 when the run succeeded and its checks passed, 2 when it succeeded but a
//! check reported findings, 1 on any error.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Command};

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Solve(a) => commands::solve(a.resolve()?),
        Command::Detect(a) => commands::detect(a.resolve()?),
        Command::Verify(a) => commands::verify(a.resolve()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
