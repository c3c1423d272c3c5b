use thiserror::Error;

/// Errors produced by the chain laboratory.
#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid chain size n = {0}; need n >= 2")]
    InvalidSize(usize),

    #[error("invalid mass law: {0}")]
    InvalidMassLaw(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("eigensolver failed to converge for mode {mode} after {iterations} iterations")]
    NoConvergence { mode: usize, iterations: usize },

    #[error("eigen-decomposition check failed: {0}")]
    SpectralCheck(String),

    #[error("quadrature did not reach tolerance {tol:e} (last estimate change {err:e})")]
    Quadrature { tol: f64, err: f64 },

    #[error("operation requires {expected} flavor, state is {got}")]
    FlavorMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("empty mode window: {0}")]
    EmptyModeSet(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ChainError>;
