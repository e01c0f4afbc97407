use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid state {state} (valid range 0..{n_states})")]
    InvalidState { state: usize, n_states: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("graph is disconnected into {} components: {}", components.len(), fmt_components(components))]
    Disconnected { components: Vec<Vec<usize>> },

    #[error("design matrix is rank deficient; null direction {direction:?}")]
    RankDeficient { direction: Vec<f64> },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("step size {alpha} violates the admissibility bound; maximal admissible step size is {max_alpha:e}")]
    Inadmissible { alpha: f64, max_alpha: f64 },

    #[error("weights diverged at step {step}: |w|_inf = {norm:e}")]
    Divergence { step: u64, norm: f64 },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config error: missing required key `{0}`")]
    MissingKey(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn fmt_components(components: &[Vec<usize>]) -> String {
    components
        .iter()
        .map(|c| {
            let shown: Vec<String> = c.iter().take(8).map(|s| s.to_string()).collect();
            if c.len() > 8 {
                format!("{{{}, ... ({} states)}}", shown.join(", "), c.len())
            } else {
                format!("{{{}}}", shown.join(", "))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
