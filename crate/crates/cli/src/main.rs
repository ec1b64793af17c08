mod args;
mod certify;
mod error;
mod files;
mod simulate;
mod sweep;
mod verify;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliResult;

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::CertifyCentralized(a) => certify::centralized(a),
        Command::CertifyDistributed(a) => certify::distributed(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Verify(a) => verify::run(a),
        Command::Sweep(a) => sweep::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdcert: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
