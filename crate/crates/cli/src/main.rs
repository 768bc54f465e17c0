use std::process::ExitCode;

use clap::Parser;
use hedonic_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error[{}]: {message}", e.code());
            ExitCode::FAILURE
        }
    }
}
