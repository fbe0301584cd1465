//! Error taxonomy shared by the whole crate.

/// All failure modes surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or incompatible arguments detected before any
    /// numerical work starts.
    #[error("configuration error: {0}")]
    Config(String),

    /// Misuse of an API contract (e.g. consuming a tape twice).
    #[error("usage error: {0}")]
    Usage(String),

    /// Tensor/layout dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A simulated state or cost became non-finite.
    #[error("simulation failure at step {step}: {detail}")]
    Simulation { step: usize, detail: String },

    /// Training aborted; the step index points at the offending batch.
    #[error("training failure at step {step}: {detail}")]
    Train { step: usize, detail: String },

    /// A Monte-Carlo estimator could not produce a value.
    #[error("estimation failure: {0}")]
    Estimation(String),

    /// Numerical linear algebra failed (singular matrix, failed factorization).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
