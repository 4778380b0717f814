//! `wrench`: publisher, subscriber, capture, verification and reporting for
//! pub/sub feed benchmarks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 run failure,
//! 4 verification failure.

mod args;
mod commands;
mod layers;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::commands::{Failure, Outcome};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUN: u8 = 3;
const EXIT_VERIFY: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WRENCH_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::VerifyFailed) => ExitCode::from(EXIT_VERIFY),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUN)
        }
    }
}
