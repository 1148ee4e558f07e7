use std::process::ExitCode;

use clap::Parser;
use lullaby_cli::{run, Cli, EXIT_OK};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli, std::env::vars().collect()) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
