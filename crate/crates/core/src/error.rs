use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input matrix has the wrong structure (not square, not Hermitian, ...).
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// An operation was called on a value lacking the required state.
    #[error("invalid state: {0}")]
    State(String),

    /// The requested stream count exceeds the numerical rank of the correlation.
    #[error("degenerate rank: {streams} streams requested but eigenvalue {index} is {value:e} (dominant {dominant:e})")]
    DegenerateRank {
        streams: usize,
        index: usize,
        value: f64,
        dominant: f64,
    },

    #[error("singular precoder: Gram matrix condition number {condition:e} exceeds limit")]
    SingularPrecoder { condition: f64 },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("tensor format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
