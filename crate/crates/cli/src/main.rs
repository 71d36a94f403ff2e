use std::process::ExitCode;

use clap::Parser;
use pec_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pec-lab: {e}");
            ExitCode::from(&e)
        }
    }
}
