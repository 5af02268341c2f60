use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter fell outside its legal domain.
    #[error("parameter `{field}` = {value} outside legal domain {legal}")]
    Domain {
        field: &'static str,
        value: f64,
        legal: &'static str,
    },

    /// The requested moment integral is infinite.
    #[error("integral diverges: |z|^{power} is not integrable against the tail of a {alpha}-stable measure")]
    DivergentIntegral { power: f64, alpha: f64 },

    #[error("quadrature did not reach tolerance: estimate {estimate}, error bound {error_bound}, requested {tolerance}")]
    Accuracy {
        estimate: f64,
        error_bound: f64,
        tolerance: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("state became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient data: {usable} usable points, at least {required} required")]
    InsufficientData { usable: usize, required: usize },
}

impl Error {
    pub(crate) fn domain(field: &'static str, value: f64, legal: &'static str) -> Self {
        Error::Domain { field, value, legal }
    }
}
