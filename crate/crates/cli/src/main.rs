mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{merge_config, Cli, Command};
use error::CliError;

fn run(cli: Cli) -> Result<Vec<std::path::PathBuf>, CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let path = a.config.clone();
            commands::simulate(merge_config(a, path.as_deref())?)
        }
        Command::Decompose(a) => {
            let path = a.config.clone();
            commands::decompose(merge_config(a, path.as_deref())?)
        }
        Command::Curves(a) => {
            let path = a.config.clone();
            commands::curves(merge_config(a, path.as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("survfair: {e}");
            e.exit_code()
        }
    }
}
