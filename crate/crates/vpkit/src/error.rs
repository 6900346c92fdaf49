use thiserror::Error;

#[derive(Debug, Error)]
pub enum VpError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported nuclear model: {0}")]
    UnsupportedModel(String),

    #[error("eigenvalue search failed: {0}")]
    SearchFailure(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, VpError>;
