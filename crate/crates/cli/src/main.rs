//! `trinity`: trade-off models and approximate-cache simulation from the shell.
//!
//! Results go to stdout as JSON unless `--out` names a file. Diagnostics go
//! to stderr. Exit codes: 0 success, 1 domain error (reported as a JSON
//! object on stderr), 2 usage or input parse error.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use serde_json::json;

pub(crate) const SEED_ENV: &str = "TRINITY_SEED";

#[derive(Debug)]
pub(crate) enum CliError {
    /// Rendered clap error; already formatted for humans.
    Usage(String),
    Core(trinity_core::Error),
    InputChanged(String),
}

impl From<trinity_core::Error> for CliError {
    fn from(e: trinity_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use trinity_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Parse { .. } | E::Io(_) | E::InvalidInput(_)) => 2,
            CliError::Core(_) | CliError::InputChanged(_) => 1,
        }
    }

    fn report(&self) {
        match self {
            CliError::Usage(msg) => eprint!("{msg}"),
            CliError::Core(e) => eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()})),
            CliError::InputChanged(msg) => eprintln!("{}", json!({"error": "InputChanged", "message": msg})),
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match commands::run(&argv, None) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code())
        }
    }
}
