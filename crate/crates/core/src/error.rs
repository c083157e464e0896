use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data violates a precondition.
    #[error("input error: {0}")]
    Input(String),
    /// A text artifact could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// A binary artifact has the wrong magic, version or shape.
    #[error("format error: {0}")]
    Format(String),
    /// A binary artifact ends early or its sections disagree with its header.
    #[error("corrupt data at byte offset {offset}: {message}")]
    Corruption { offset: u64, message: String },
    #[error("selection error: {0}")]
    Selection(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
