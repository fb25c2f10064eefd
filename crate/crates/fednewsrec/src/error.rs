use thiserror::Error;

/// Errors surfaced by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {context}: {lhs:?} vs {rhs:?}")]
    Shape {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("privacy budget undefined (no noise)")]
    UndefinedBudget,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(context: impl Into<String>, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            context: context.into(),
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
