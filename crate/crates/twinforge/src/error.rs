use std::path::{Path, PathBuf};

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config {
        path: PathBuf,
        field: Option<String>,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing inputs: {}", .0.join(", "))]
    Missing(Vec<String>),

    #[error(transparent)]
    Core(#[from] twinforge_core::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn config(path: &Path, field: Option<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.to_path_buf(),
            field,
            message: message.into(),
        }
    }

    /// 3 for numerical failures of a solve or training run, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Format { .. } => "format",
            CliError::Io { .. } => "io",
            CliError::Missing(_) => "missing_inputs",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(_) => "invalid_input",
        }
    }

    /// One-line JSON for stderr.
    pub fn payload(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        match self {
            CliError::Config { field: Some(f), .. } => v["field"] = json!(f),
            CliError::Core(twinforge_core::Error::InvalidArgument { name, .. }) => v["field"] = json!(name),
            CliError::Core(twinforge_core::Error::CflViolation {
                required_substeps, ..
            }) => v["required_substeps"] = json!(required_substeps),
            CliError::Missing(list) => v["missing"] = json!(list),
            _ => {}
        }
        v
    }
}
