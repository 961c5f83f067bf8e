use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A prediction was requested from a predictor with no training data.
    #[error("prediction requested before any data was received")]
    ColdStart,

    #[error("training times must be strictly increasing: got {got} after {last}")]
    NonIncreasingTime { last: i64, got: i64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the CLI: config errors 1, I/O errors 3,
    /// everything else is an internal failure reported as 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
