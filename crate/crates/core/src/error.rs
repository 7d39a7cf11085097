use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("evaluation produced non-finite values in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid case data: {0}")]
    InvalidCase(String),

    #[error("removing line {from}-{to} islands the network: buses {island:?} are disconnected")]
    Islanded { from: usize, to: usize, island: Vec<usize> },

    #[error("power flow did not converge after {iterations} iterations (mismatch trace: {trace:?})")]
    PowerFlowDiverged { iterations: usize, trace: Vec<f64> },

    #[error("linear solve failed: {0}")]
    LinearSolve(&'static str),

    #[error("unknown builtin system `{0}`")]
    UnknownSystem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
