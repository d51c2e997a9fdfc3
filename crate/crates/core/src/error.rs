use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
///
/// The variants are grouped so that the command-line front end can map them
/// onto stable exit codes (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller passed a value outside an operation's accepted range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A mathematically undefined evaluation (Hankel at zero, rigid sphere at DC, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Configuration did not validate; `field` is the dotted path of the offending entry.
    #[error("{field}: {message}")]
    Validation { field: String, message: String },

    /// A file has the wrong structure. `offset` is the byte position where reading failed.
    #[error("{}: malformed file at byte {offset}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 2 validation, 3 I/O, 4 numeric/domain.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Argument(_) | Error::Domain(_) | Error::Precondition(_) => 4,
        }
    }
}
