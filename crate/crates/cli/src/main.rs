//! `hiret` — reproducible hierarchical-retrieval experiments:
//! synth -> train -> encode -> search / bench -> cost -> eval.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 numeric divergence,
//! 5 schema/schedule mismatch.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::from(0),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
