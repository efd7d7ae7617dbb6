use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    InvalidArgument(String),
    /// Data does not conform to the closed factor catalog or corpus rules.
    Schema(String),
    /// A statistic is mathematically undefined for the given input.
    UndefinedResult(String),
    /// A keyed lookup (post id, user, window) failed.
    Lookup(String),
    /// Inconsistent external data (e.g. mixed vector dimensions).
    Format(String),
    /// Training produced a non-finite loss or parameter.
    Diverged { epoch: usize, batch: usize },
    /// An error raised while processing one cross-validation fold.
    Fold { fold: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::Schema(m) => write!(f, "schema error: {m}"),
            Error::UndefinedResult(m) => write!(f, "undefined result: {m}"),
            Error::Lookup(m) => write!(f, "lookup error: {m}"),
            Error::Format(m) => write!(f, "format error: {m}"),
            Error::Diverged { epoch, batch } => {
                write!(f, "training diverged at epoch {epoch}, batch {batch}")
            }
            Error::Fold { fold, source } => write!(f, "fold {fold}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Fold { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
