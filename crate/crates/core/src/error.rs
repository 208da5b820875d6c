use thiserror::Error;

/// Errors raised by the library. Each variant carries a human-readable message.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or argument outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// The operation is not defined on the requested topology or model.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A caller broke a documented precondition (for example, querying an
    /// unmaterialised edge).
    #[error("contract violation: {0}")]
    Contract(String),
    /// An exact computation was refused because its state space is too large.
    #[error("refused: {0}")]
    Refused(String),
    /// Configuration problems; one message per violation.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn refused(msg: impl Into<String>) -> Self {
        Error::Refused(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
