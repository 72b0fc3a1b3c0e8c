//! `weylab` command-line front end.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 invalid input,
//! 3 resource refusal, 4 numerical failure.

mod args;
mod commands;

use clap::Parser;
use std::process::ExitCode;

use args::Cli;
use commands::Outcome;

fn exit_code(err: &anyhow::Error) -> u8 {
    use weylab::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Toml(_) | Error::Unsupported(_) | Error::CleanlinessViolation { .. }) => 2,
        Some(Error::Resource(_) | Error::NodeBudget { .. }) => 3,
        Some(_) => 4,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = match config.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::run(&config)),
            Err(e) => Err(e.into()),
        },
        None => commands::run(&config),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(weylab::Error::CleanlinessViolation { .. }) = e.downcast_ref::<weylab::Error>() {
                eprintln!("hint: the phase is not clean; resolve it with `weylab blowup-demo {}`", config.oscillatory.phase.as_deref().unwrap_or("xy2"));
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
