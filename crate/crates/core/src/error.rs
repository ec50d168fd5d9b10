use thiserror::Error;

/// Errors raised by the synthesis library.
#[derive(Debug, Error)]
pub enum NfsError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A special-function recurrence left the representable range.
    #[error("overflow evaluating {function} at degree {degree}, x = {x:e}")]
    Overflow {
        function: &'static str,
        degree: usize,
        x: f64,
    },

    /// Sample points or surfaces violate the required geometric separation.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Inconsistent or insufficient numerical configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite or malformed numerical data.
    #[error("data error: {0}")]
    Data(String),

    /// A configuration the formulation does not cover.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// The linear-algebra backend failed to converge.
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NfsError {
    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            NfsError::Domain(_) => "domain",
            NfsError::Overflow { .. } => "overflow",
            NfsError::Geometry(_) => "geometry",
            NfsError::Config(_) => "config",
            NfsError::Data(_) => "data",
            NfsError::Unsupported(_) => "unsupported",
            NfsError::LinearAlgebra(_) => "linear_algebra",
            NfsError::Io(_) => "io",
            NfsError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, NfsError>;
