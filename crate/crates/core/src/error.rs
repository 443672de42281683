use thiserror::Error;

/// Errors raised by the simulator and the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unsupported derivative order {order} for smoothness exponent p = {p}")]
    UnsupportedDerivative { order: usize, p: u32 },

    #[error("rejection sampler `{sampler}` failed after {attempts} attempts")]
    RejectionFailure { sampler: &'static str, attempts: usize },

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("matrix is not symmetric positive semi-definite: {0}")]
    NotSpd(String),

    #[error("particle count {count} exceeded the cap {cap}")]
    ParticleCap { count: usize, cap: usize },

    #[error("no interacting particle matches the selector: {0}")]
    SelectorMiss(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("time grid outside the recorded range: {0}")]
    OutOfRange(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.to_string(),
        reason: reason.into(),
    }
}
