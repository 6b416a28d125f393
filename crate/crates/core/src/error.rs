use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core algorithms.
///
/// Variants split into data problems (bad input the caller can fix) and
/// invariant violations (a bug or corrupted state).
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed input record; `line` is 1-based.
    Malformed { line: usize, message: String },
    DuplicateId(String),
    UnknownPassage(String),
    DimensionMismatch { expected: usize, found: usize },
    NonFinite(&'static str),
    InvalidArgument(String),
    EmptyInput(&'static str),
    MissingQuestion(usize),
    Invariant(String),
}

impl Error {
    /// True for errors caused by bad input data rather than by a broken invariant.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Invariant(_))
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Malformed { line, message } => write!(f, "line {line}: {message}"),
            Error::DuplicateId(id) => write!(f, "duplicate id {id:?}"),
            Error::UnknownPassage(id) => write!(f, "unknown passage id {id:?}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::MissingQuestion(qid) => write!(f, "run has no results for question {qid}"),
            Error::Invariant(msg) => write!(f, "invariant violated: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
