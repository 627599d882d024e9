//! Command-line driver: equilibrium solves, condition checks, transport
//! simulations, parameter sweeps and oracle comparisons, each configured by a
//! single JSON document and writing deterministic JSON/CSV files.

mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::path::Path;

use thiserror::Error;
use vintage_eq_core::error::Error as CoreError;

pub use commands::{
    cmd_check, cmd_equilibrium, cmd_oracle, cmd_simulate, cmd_sweep, convergence_orders,
};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, invalid model or unusable output location.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            _ if e.is_input_error() => CliError::Input(e.to_string()),
            CoreError::NoConvergence { last_steps, .. } => {
                let steps: Vec<String> = last_steps.iter().map(|s| output::fmt_f64(*s)).collect();
                CliError::Numerical(format!("{e}; last step norms: [{}]", steps.join(", ")))
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Equilibrium,
    Check,
    Simulate,
    Sweep,
    Oracle,
}

/// Loads the config, applies the `--n-cells` override, runs `command` and
/// returns the process exit code. Errors are reported on standard error.
pub fn run(command: Command, config_path: &Path, out_dir: &Path, n_cells: Option<usize>) -> i32 {
    match try_run(command, config_path, out_dir, n_cells) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn try_run(
    command: Command,
    config_path: &Path,
    out_dir: &Path,
    n_cells: Option<usize>,
) -> Result<(), CliError> {
    let mut config = RunConfig::from_path(config_path)?;
    if let Some(n) = n_cells {
        config.n_cells = Some(n);
    }
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;
    match command {
        Command::Equilibrium => cmd_equilibrium(&config, out_dir),
        Command::Check => cmd_check(&config, out_dir),
        Command::Simulate => cmd_simulate(&config, out_dir),
        Command::Sweep => cmd_sweep(&config, out_dir),
        Command::Oracle => cmd_oracle(&config, out_dir),
    }
}
