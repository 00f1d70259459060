use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("training error in {context}: {message}")]
    Training { context: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: validation failed: {message}")]
    Validation { line: usize, message: String },

    #[error("line {line}: timestamp {ts} for user {user_id} is earlier than {prev}")]
    Ordering {
        line: usize,
        user_id: String,
        ts: i64,
        prev: i64,
    },

    #[error("missing prerequisite {path}: run `{stage}` first")]
    MissingPrerequisite { stage: &'static str, path: PathBuf },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("{what} index {index} out of range (len {len})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("task {task}: {source}")]
    Task {
        task: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            got,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command line: 2 for configuration
    /// problems, 3 for a missing earlier stage, 4 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownName { .. } => 2,
            Error::MissingPrerequisite { .. } => 3,
            Error::Task { source, .. } => source.exit_code(),
            _ => 4,
        }
    }

    pub fn for_task(self, task: usize) -> Self {
        Error::Task {
            task,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_dim(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::shape(context, expected, got));
    }
    Ok(())
}
