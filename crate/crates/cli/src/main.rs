use std::process::ExitCode;

use broxlab::Cli;
use clap::Parser;

fn main() -> ExitCode {
    broxlab::run(&Cli::parse())
}
