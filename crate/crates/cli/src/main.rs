use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use vintage_eq::Command;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Equilibrium,
    Check,
    Simulate,
    Sweep,
    Oracle,
}

#[derive(Debug, Parser)]
#[command(
    name = "vintage-eq",
    version,
    about = "Equilibrium points of the vintage-capital investment problem"
)]
struct Args {
    command: Cmd,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides `n_cells` from the config.
    #[arg(long)]
    n_cells: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        Cmd::Equilibrium => Command::Equilibrium,
        Cmd::Check => Command::Check,
        Cmd::Simulate => Command::Simulate,
        Cmd::Sweep => Command::Sweep,
        Cmd::Oracle => Command::Oracle,
    };
    let code = vintage_eq::run(command, &args.config, &args.out_dir, args.n_cells);
    ExitCode::from(code as u8)
}
