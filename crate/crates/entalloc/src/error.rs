//! Crate-wide error type with a stable mapping onto process exit codes.
//!
//! Every fallible operation in this crate returns [`Error`]. The variants
//! partition failures by who has to fix them:
//!
//! * [`Error::Usage`]: the caller passed arguments that can never work
//!   (bad dimensions, out-of-range parameters, malformed flags).
//! * [`Error::Data`]: the input files or values are self-inconsistent
//!   (mismatched utterance ids, non-finite payloads, vocabulary gaps).
//! * [`Error::Format`]: a byte stream or text document does not parse as the
//!   container format it claims to be (bad magic, truncation, broken JSON).
//! * [`Error::Numerical`]: the math itself failed (a covariance that is not
//!   positive-definite, an SVD that did not converge).
//!
//! The command-line front end maps these onto exit codes via
//! [`Error::exit_code`]: usage errors exit 1, data and format errors exit 2,
//! numerical errors exit 3.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The caller asked for something that can never succeed.
    #[error("usage error: {0}")]
    Usage(String),

    /// The inputs are structurally valid but semantically inconsistent.
    #[error("data error: {0}")]
    Data(String),

    /// A container (binary dump, manifest, CSV) failed to parse.
    #[error("format error: {0}")]
    Format(String),

    /// A numerical routine could not produce a trustworthy answer.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An underlying I/O operation failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Builds a [`Error::Usage`] from anything string-like.
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Builds a [`Error::Data`] from anything string-like.
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Builds a [`Error::Format`] from anything string-like.
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Builds a [`Error::Numerical`] from anything string-like.
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Prefixes the message with a pipeline-stage context, preserving the
    /// error class (and therefore the exit code).
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Usage(m) => Error::Usage(format!("{ctx}: {m}")),
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
            Error::Format(m) => Error::Format(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Io(e) => Error::Data(format!("{ctx}: io error: {e}")),
        }
    }

    /// Stable process exit code for this error class.
    ///
    /// `0` is success (never an `Error`), `1` is usage, `2` is data or
    /// format (including I/O), `3` is numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Data(_) | Error::Format(_) | Error::Io(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}
