use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error(
        "assumption violated: dispersion-loss matrix is not fully dispersive \
         (min|r_kl|/max|r_kl| = {ratio:.3e} at ({row}, {col})); {context}"
    )]
    NotFullyDispersive {
        ratio: f64,
        row: usize,
        col: usize,
        context: String,
    },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("series not converged after {terms} terms (tail bound {tail:.3e})")]
    Truncation { terms: usize, tail: f64 },

    #[error("degenerate sample set: {0}")]
    DegenerateSample(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
