//! `supkde` command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 input, 4 configuration, 5 empty candidate
//! set, 6 numerical failure, 7 grid limits. Failures print one JSON object on
//! standard error and leave no output files behind.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use output::Staged;

fn execute(cli: &Cli) -> supkde::Result<()> {
    let mut staged = Staged::default();
    match &cli.command {
        Command::Select(a) => commands::run_select(cli, a, &mut staged)?,
        Command::Fit(a) => commands::run_fit(cli, a, &mut staged)?,
        Command::Constants(a) => commands::run_constants(cli, a, &mut staged)?,
        Command::KernelCheck(a) => commands::run_kernel_check(cli, a, &mut staged)?,
        Command::Simulate(a) => commands::run_simulate(cli, a, &mut staged)?,
        Command::Rates(a) => commands::run_rates(cli, a, &mut staged)?,
        Command::Structure(a) => commands::run_structure(cli, a, &mut staged)?,
        Command::Rerun(a) => return execute(&commands::rerun_config(a)?),
    }
    staged.commit()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            let err = supkde::Error::InvalidArgument("thread count must be positive".into());
            let (code, text) = output::error_json(cli.command.label(), &err);
            eprintln!("{text}");
            return ExitCode::from(code);
        }
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, text) = output::error_json(cli.command.label(), &err);
            eprintln!("{text}");
            ExitCode::from(code)
        }
    }
}
