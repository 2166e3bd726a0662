use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A time point does not sit on the fine grid of a trajectory bundle.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Input shapes violate an operation contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    /// A run would exceed a resource limit (fine-grid cap).
    #[error("resource limit: {0}")]
    Resource(String),

    /// A Monte Carlo worker failed on a specific replicate.
    #[error("replicate {replicate} failed: {source}")]
    Replicate {
        replicate: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) => 2,
            Error::Resource(_) => 3,
            Error::Io { .. } => 4,
            Error::Domain(_) | Error::Alignment(_) | Error::Contract(_) => 5,
            Error::Replicate { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
