use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use thermoevo::cli::{run, Invocation, Mode};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Check,
    Simulate,
    Verify,
    Patterns,
}

/// Well-posedness certification and simulation of rational thermoelastic material laws.
#[derive(Debug, Parser)]
#[command(name = "thermoevo", version)]
struct Args {
    mode: ModeArg,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// With `patterns`: print the tables of all eight catalog families.
    #[arg(long)]
    all: bool,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mode = match args.mode {
        ModeArg::Check => Mode::Check,
        ModeArg::Simulate => Mode::Simulate,
        ModeArg::Verify => Mode::Verify,
        ModeArg::Patterns => Mode::Patterns,
    };
    let outcome = run(&Invocation { mode, config: args.config, all: args.all, out: args.out });
    print!("{}", outcome.stdout);
    let _ = std::io::stdout().flush();
    eprint!("{}", outcome.stderr);
    ExitCode::from(outcome.status as u8)
}
