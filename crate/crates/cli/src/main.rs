use std::process::ExitCode;

use clap::Parser;
use fraclab::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fraclab {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
