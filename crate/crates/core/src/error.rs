//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside its mathematical domain (e.g. `t` outside `[0, T]`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Operation not defined for this target/score combination.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Covariance or sample matrix is singular below the 1e-12 eigenvalue floor.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A theorem precondition does not hold for the requested evaluation.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Backward sampler state exceeded the divergence guard.
    #[error("sampler diverged at step {step}: coordinate magnitude exceeded 1e8")]
    Divergence { step: usize },

    /// Training produced a non-finite loss.
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
