use std::process::ExitCode;

use clap::Parser;
use dspdhg::cli::{run_cli, Cli};

fn main() -> ExitCode {
    run_cli(Cli::parse())
}
