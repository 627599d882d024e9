use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid model: {}", join(.0))]
    Validation(Vec<ModelError>),

    #[error("bracket failure: {0}")]
    BracketFailure(String),

    #[error("output weight alpha is not in V: alpha(s_bar) = {value:e} (tolerance {tol:e})")]
    AlphaNotInV { value: f64, tol: f64 },

    #[error("check requires {expected} revenue, got {got}")]
    WrongFamily {
        expected: &'static str,
        got: &'static str,
    },

    #[error("Picard iteration did not converge after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        last_steps: Vec<f64>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Input or validation problem, as opposed to a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::GridMismatch(_)
                | Error::Validation(_)
                | Error::AlphaNotInV { .. }
                | Error::WrongFamily { .. }
                | Error::InvalidArgument(_)
        )
    }
}

fn join(errs: &[ModelError]) -> String {
    errs.iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
