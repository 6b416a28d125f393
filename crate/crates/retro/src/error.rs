use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a CLI stage, classified for the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Format { path: PathBuf, line: Option<usize>, message: String },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: retro_core::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, line: Option<usize>, message: impl Into<String>) -> Self {
        CliError::Format { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn core(context: impl Into<String>, source: retro_core::Error) -> Self {
        CliError::Core { context: context.into(), source }
    }

    /// 1 usage, 2 bad or missing data, 3 internal invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Format { .. } => 2,
            CliError::Core { source, .. } => {
                if source.is_data_error() {
                    2
                } else {
                    3
                }
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "usage",
            2 => "data",
            _ => "internal",
        }
    }

    /// Single-line rendering for stderr: `error[kind]: message`.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.kind(), msg)
    }
}

/// Attaches a context string to core results.
pub trait CoreContext<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> CoreContext<T> for retro_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::core(what(), e))
    }
}
