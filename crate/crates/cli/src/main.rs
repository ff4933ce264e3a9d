use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = uipc::Cli::parse();
    match uipc::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
