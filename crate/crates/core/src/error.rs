use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("r = {r} outside tabulated range [{lo}, {hi}]")]
    OutOfTable { r: f64, lo: f64, hi: f64 },

    #[error("linear solve failed: relative residual {residual:e}")]
    Solve { residual: f64 },

    #[error("ground state did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("ground state iterate lost positivity: {0}")]
    LostPositivity(String),

    #[error("zero field")]
    ZeroField,

    #[error("virial weight invariant violated: {0}")]
    WeightInvariant(String),

    #[error("not enough records: need {need}, have {have}")]
    TooFewRecords { need: usize, have: usize },

    #[error("no admissible pair in range: {0}")]
    NoPair(String),

    #[error("state snapshots were not retained")]
    NoSnapshots,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
