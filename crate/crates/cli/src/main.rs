mod args;
mod run;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config: exit code 2.
    Usage(String),
    /// Anything that fails after validation: exit code 1.
    Runtime(String),
}

impl From<stylemask::Error> for CliError {
    fn from(e: stylemask::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 2 for usage errors and 0 for --help/--version
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Mask(a) => run::mask(a),
        Command::Stylize(a) => run::stylize(a),
        Command::Classify(a) => run::classify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
