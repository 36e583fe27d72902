use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A distribution with zero variance has no finite differential entropy.
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("rejection sampling accepted {accepted} of {proposed} proposals; the max-value sample is inconsistent with the posterior")]
    LowAcceptance { accepted: usize, proposed: usize },

    #[error("unsupported dimension {dim}: {reason}")]
    UnsupportedDimension { dim: usize, reason: &'static str },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_dims(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(invalid(format!(
            "{what}: expected dimension {expected}, got {got}"
        )));
    }
    Ok(())
}
