//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad truncation order, unusable activation for a
    /// derivative order, mismatched parameter segment, malformed spec string.
    #[error("configuration error: {0}")]
    Config(String),

    /// A NaN or infinity surfaced during evaluation or gradient accumulation.
    /// Carries the tape node (or iteration) where it was first seen.
    #[error("numeric fault at {site}: {detail}")]
    Numeric { site: String, detail: String },

    /// Gate normalization is undefined for the given coefficients
    /// (e.g. l1 normalization with all-zero input).
    #[error("degenerate gate: {0}")]
    DegenerateGate(String),

    /// Reference norm is zero; the relative error is undefined.
    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    /// Input outside the problem domain.
    #[error("out of range: {0}")]
    Range(String),

    /// A quadrature or iterative scheme failed its self-consistency check.
    #[error("accuracy not reached: {0}")]
    Accuracy(String),

    /// Time integration blew up.
    #[error("instability: {0}")]
    Instability(String),

    /// A size cap was exceeded (e.g. NTK point count).
    #[error("size limit exceeded: {0}")]
    Size(String),

    /// Reference/measurement file rejected; lists offending lines.
    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(site: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric { site: site.into(), detail: detail.into() }
    }
}
