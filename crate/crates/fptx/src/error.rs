use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The requested variant is not implemented.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Operand shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// The input makes the operation degenerate (e.g. a constant vector under layer normalization).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// The map is not differentiable at the requested point.
    #[error("not differentiable: {0}")]
    NotDifferentiable(String),
    /// A matrix required to be nonsingular is numerically singular.
    #[error("singular matrix: {0}")]
    Singular(String),
    /// A configuration value is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(what()))
    }
}
