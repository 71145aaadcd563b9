mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use hybrid_shrinkage::Error;

use crate::args::Cli;

/// Process exit status for a library error.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_) | Error::Parse { .. } => 2,
        Error::SingularDenominator(_) | Error::InfeasibleSelection { .. } | Error::Numerical(_) => 3,
        Error::Io { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
