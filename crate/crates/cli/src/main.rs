//! Binary entry point: parse arguments, set up logging, map failures to
//! exit codes (0 ok, 1 usage/config, 2 data, 3 convergence flag).

mod cli;
mod commands;
mod config;
mod manifest;

use clap::Parser;

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<hydrorecon::Error>() {
        Some(hydrorecon::Error::Config(_)) => 1,
        // I/O, malformed files, structural data problems, numerical
        // breakdown: all faults of the inputs, not the invocation.
        _ => 2,
    }
}

fn main() {
    let cli = match cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            log::error!("{err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}
