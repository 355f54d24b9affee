use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate}, error {error}")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("{0} is not an endpoint or junction of the network")]
    NotAnEndpoint(String),

    #[error("operation refused: {0}")]
    Refused(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    CgStalled { iterations: usize, residual: f64 },

    #[error("energy increased for {failures} consecutive attempts at step {step} (last increase {increase:e})")]
    Divergence {
        step: usize,
        failures: usize,
        increase: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
