use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    forage_cli::main_with(forage_cli::Cli::parse())
}
