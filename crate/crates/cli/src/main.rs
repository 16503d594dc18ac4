mod args;
mod commands;
mod config;
mod error;
mod io;
mod manifest;

use std::ffi::OsString;

use clap::Parser;

use crate::args::Cli;
use crate::error::{usage, CliResult, EXIT_OK, EXIT_USAGE};

fn run(argv: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("resboot: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let threads = match cli.threads {
        Some(0) => return Err(usage("--threads must be at least 1")),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cli.command))
}

fn main() {
    std::process::exit(run(std::env::args_os()));
}
