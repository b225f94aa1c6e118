use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation (e.g. |θ| ≥ π/2, r ≤ 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is out of range or mutually inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// The input is degenerate for the requested operation (e.g. zero channel at finite SNR).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// NaN/Inf or a failed factorization inside a numerical kernel.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        })
    }
}
