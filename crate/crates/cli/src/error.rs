//! Driver errors, partitioned by exit code: 2 for configuration problems,
//! 3 for runtime/numerical failures, 4 for IO.

/// Anything that can abort a driver run.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration, CLI arguments, or semantic mismatches between
    /// artifacts (config-hash or architecture disagreements). Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// A failure during compute: non-finite numbers, a stalled teacher, a
    /// solver hitting its cap. Exit code 3.
    #[error("runtime error: {0}")]
    Runtime(String),
    /// Filesystem trouble or unreadable/corrupt artifact files. Exit code 4.
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Wraps a filesystem error with the path it concerned.
    pub fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

/// Core failures surface after validation, so they are runtime errors.
impl From<zsaq_core::CoreError> for CliError {
    fn from(err: zsaq_core::CoreError) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
