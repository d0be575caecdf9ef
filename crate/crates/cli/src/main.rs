use std::process::ExitCode;

use clap::Parser;
use momentrate_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match momentrate_cli::main_with(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("momentrate: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
