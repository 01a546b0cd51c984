//! `volregime` command-line entry point.
//!
//! Exit status: 0 on success, 2 for usage errors, 65 for invalid input data
//! and 74 for I/O failures.

mod aggregate;
mod args;
mod error;
mod inputs;
mod manifest;
mod segment;
mod synth;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, Result};

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Synth(a) => synth::run(a),
        Command::Segment(a) => segment::run(a),
        Command::Aggregate(a) => aggregate::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::Class::Usage.exit_code() } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.class.exit_code()
        }
    }
}
