use std::process::ExitCode;

use clap::Parser;
use padic_expsum_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match padic_expsum_cli::run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
