mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::UsageError;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some()
        || matches!(err.downcast_ref::<dbnmf_core::Error>(), Some(dbnmf_core::Error::Config(_)))
    {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // clap exits with 2 on usage errors and 0 for --help / --version.
        Err(e) => e.exit(),
    };
    let result = match &cli.command {
        Command::Factorize(a) => commands::factorize(a),
        Command::Compare(a) => commands::compare(a),
        Command::Render(a) => commands::render(a),
        Command::Metrics(a) => commands::metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
