use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = nmpcm::cli::Cli::parse();
    ExitCode::from(nmpcm::cli::execute(&cli))
}
