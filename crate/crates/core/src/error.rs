use thiserror::Error;

use crate::oracles::OracleError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frequency mask selects no coefficients")]
    EmptyMask,

    #[error("degenerate triangle: alpha={alpha}, beta={beta} (alpha + |beta| must be in (0, pi))")]
    DegenerateTriangle { alpha: f64, beta: f64 },

    #[error("could not sample a non-degenerate subspace direction after {attempts} attempts")]
    DegenerateSubspace { attempts: usize },

    #[error("initial point is not adversarial")]
    NotAdversarial,

    #[error("no adversarial initialization found after {queries} queries")]
    InitializationFailed { queries: u64 },

    #[error(transparent)]
    Oracle(#[from] OracleError),

    #[error("image codec: {0}")]
    Codec(String),

    #[error("malformed surrogate file: {0}")]
    SurrogateFormat(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
