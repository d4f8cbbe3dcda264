//! Error types shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An ODE integration produced a non-finite state.
    #[error("integration diverged at t = {time}: state = {state:?}")]
    IntegrationDiverged { time: f64, state: Vec<f64> },

    /// A sampling or integration region has zero (or negative) volume.
    #[error("invalid region: {0}")]
    InvalidRegion(String),

    /// A state vector was non-finite or had the wrong length.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A quadrature specification cannot be evaluated.
    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),

    /// A fit was requested on an empty snapshot set.
    #[error("empty data: no snapshot pairs")]
    EmptyData,

    /// Lifted snapshot data contained non-finite values.
    #[error("invalid data at snapshot {index}: {reason}")]
    InvalidData { index: usize, reason: String },

    /// The Gram matrix is not positive definite even after regularization.
    #[error("singular gram matrix: {0}")]
    SingularGram(String),

    /// A density field is identically zero, so no support can be extracted.
    #[error("empty support: field has no positive values")]
    EmptySupport,

    /// An operation needs an axis-separable dictionary but got something else.
    #[error("unsupported dictionary: {0}")]
    UnsupportedDictionary(String),

    /// The operator file was fitted with a different dictionary than the config asks for.
    #[error("dictionary mismatch: operator file has {found}, config has {expected}")]
    DictionaryMismatch { found: String, expected: String },

    /// Sample standard deviation is zero, so no bandwidth can be derived.
    #[error("degenerate bandwidth: {0}")]
    DegenerateBandwidth(String),

    /// A configuration field failed validation.
    #[error("config error at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
