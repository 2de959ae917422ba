use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value violates the contract of the type or operation it was passed to.
    #[error("validation error: {0}")]
    Validation(String),

    /// A run or GA configuration is internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A surrogate could not be fitted to the supplied data.
    #[error("surrogate fit failed: {0}")]
    Fit(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
