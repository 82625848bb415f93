use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maxent_cli::{resolve, run, CliError, Command, Flags, OUTPUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "maxent", version, about = "Maximum-entropy win-probability martingale solvers")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Solve the HJB equation for the value surface e(t, x)
    Solve(Flags),
    /// Solve the logarithmic diffusion equation for p(t, x)
    ForwardP(Flags),
    /// Propagate the density of the win probability
    Density(Flags),
    /// Monte Carlo simulation of the controlled process
    Simulate(Flags),
    /// Run the invariant suite
    Check(Flags),
    /// Write the data behind the figures
    ReproduceFigures(Flags),
}

impl Sub {
    fn split(self) -> (Command, Flags) {
        match self {
            Sub::Solve(f) => (Command::Solve, f),
            Sub::ForwardP(f) => (Command::ForwardP, f),
            Sub::Density(f) => (Command::Density, f),
            Sub::Simulate(f) => (Command::Simulate, f),
            Sub::Check(f) => (Command::Check, f),
            Sub::ReproduceFigures(f) => (Command::ReproduceFigures, f),
        }
    }
}

fn execute(command: Command, flags: Flags) -> Result<(), CliError> {
    let file_text = match &flags.config {
        Some(path) => Some(fs::read_to_string(path).map_err(CliError::io(path))?),
        None => None,
    };
    let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    let cfg = resolve(command, &flags, file_text.as_deref(), env_dir.as_deref())?;
    eprint!("# resolved configuration\n{cfg}");
    run(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, flags) = cli.command.split();
    match execute(command, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
