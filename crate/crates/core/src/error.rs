use std::io;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no interior ray maximum: quotient is {0} <= 0")]
    RayUnbounded(f64),
    #[error("grid cannot resolve the bubble: {0}")]
    Resolution(String),
    #[error("rate fit failed: {0}")]
    Fit(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("ill-conditioned span: Gram condition number {0:e}")]
    IllConditioned(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index {index} out of range (count {count})")]
    Index { index: usize, count: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
