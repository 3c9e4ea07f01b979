use std::path::PathBuf;

/// Crate-wide error type. The CLI maps variants onto its exit-code contract:
/// configuration/usage problems exit 2, runtime faults exit 1.
#[derive(Debug, thiserror::Error)]
pub enum VdnError {
    /// Invalid configuration value or inconsistent shapes/sizes.
    #[error("config error: {0}")]
    Config(String),

    /// Textual input (map file, config file, CSV) failed to parse.
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    /// Checkpoint blob is malformed or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Numerical fault during training (non-finite loss/activation/gradient).
    #[error("training fault: {0}")]
    Training(String),

    /// API misuse (stepping a finished episode, missing forward cache, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// I/O failure, tagged with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl VdnError {
    pub fn parse(line: usize, col: usize, msg: impl Into<String>) -> Self {
        VdnError::Parse { line, col, msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VdnError::Io { path: path.into(), source }
    }

    /// Exit code the CLI uses for this error: 2 for usage/config/parse
    /// problems (including missing input files), 1 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            VdnError::Config(_)
            | VdnError::Parse { .. }
            | VdnError::Checkpoint(_)
            | VdnError::Usage(_) => 2,
            VdnError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            VdnError::Training(_) | VdnError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, VdnError>;
