use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the lab.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed group, word or measure specification.
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    /// Operands or parameters that do not belong together (mixed specs, empty sets, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested operation is not supported for this group or radius.
    #[error("unsupported: {0}")]
    Capability(String),

    /// A support or ball would exceed the configured cap.
    #[error("resource limit exceeded: {what} needs {needed} entries, cap is {cap}")]
    Resource { what: String, needed: usize, cap: usize },

    /// The truncation/leak error budget exceeds the requested tolerance.
    #[error("accuracy error: error bound {bound:e} exceeds tolerance {tolerance:e}")]
    Accuracy { bound: f64, tolerance: f64 },

    /// A lookup outside the range covered by a table.
    #[error("out of range: {0}")]
    Range(String),

    /// A boundary prefix is too short to determine the requested quantity.
    #[error("precision error: {0}")]
    Precision(String),

    /// An iterative solve did not reach its target residual.
    #[error("numeric error: {message} (residual {residual:e})")]
    Numeric { message: String, residual: f64 },

    /// No spectral decay was detected where a gap is required.
    #[error("spectral error: estimated decay rate {tau} is not below 1")]
    Spectral { tau: f64 },

    /// Not enough (or degenerate) data for a statistical procedure.
    #[error("statistical error: {0}")]
    Statistical(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Domain(_) => "domain",
            Error::Capability(_) => "capability",
            Error::Resource { .. } => "resource",
            Error::Accuracy { .. } => "accuracy",
            Error::Range(_) => "range",
            Error::Precision(_) => "precision",
            Error::Numeric { .. } => "numeric",
            Error::Spectral { .. } => "spectral",
            Error::Statistical(_) => "statistical",
        }
    }

    pub(crate) fn parse(position: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            position,
            message: message.into(),
        }
    }
}
