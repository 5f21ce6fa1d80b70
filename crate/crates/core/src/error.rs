use thiserror::Error;

/// Errors raised by the simulation engines and benchmark routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QateError {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or unsupported model / protocol configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A closed-form expression hit a vanishing denominator or gap.
    #[error("singularity: {0}")]
    Singularity(String),
    /// The request exceeds a resource cap (e.g. Hilbert-space size).
    #[error("resource limit: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, QateError>;

macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::QateError::Domain(format!($($arg)*)) };
}
macro_rules! config {
    ($($arg:tt)*) => { $crate::error::QateError::Config(format!($($arg)*)) };
}
pub(crate) use {config, domain};
