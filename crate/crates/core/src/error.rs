use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("empty region")]
    EmptyRegion,

    /// Adaptive refinement exhausted its interval budget before meeting tolerance.
    #[error("quadrature did not converge: estimated error {error:.3e} above tolerance {tolerance:.3e} after {intervals} intervals")]
    NonConvergence {
        error: f64,
        tolerance: f64,
        intervals: usize,
    },

    /// The weighted integral kept growing past the divergence ceiling.
    #[error("divergence: value {value:.6e} exceeded ceiling {ceiling:.6e}")]
    Divergence { value: f64, ceiling: f64 },

    #[error("Monte Carlo budget too small: relative standard error {relative:.3e} exceeds {limit}")]
    BudgetTooSmall { relative: f64, limit: f64 },

    #[error("seminorm vanishes: {0}")]
    ZeroSeminorm(String),

    #[error("degenerate family: {0}")]
    DegenerateFamily(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("invalid configuration for `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
