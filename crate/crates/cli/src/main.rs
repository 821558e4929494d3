//! `convsafe` command-line tool. Exit codes: 0 success, 1 usage error,
//! 2 data error.

mod args;
mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches};

use crate::args::Cli;

/// Bad flags or flag combinations; maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

fn report(err: &anyhow::Error) -> ExitCode {
    if err.downcast_ref::<UsageError>().is_some() {
        eprintln!("error: {err}");
        eprintln!("\nFor more information, try '--help'.");
        return ExitCode::from(EXIT_USAGE);
    }
    eprintln!("error: {err}");
    for cause in err.chain().skip(1) {
        eprintln!("  caused by: {cause}");
    }
    ExitCode::from(EXIT_DATA)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cmd = Cli::command();
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::merge(&cmd, argv) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match cmd.try_get_matches_from(&argv).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return report(&UsageError("--threads must be at least 1".into()).into());
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli.command, cli.global, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
