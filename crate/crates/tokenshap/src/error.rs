use std::io;
use std::path::Path;

use serde::Serialize;

/// Failure of a command, split into the two exit classes of the CLI.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit code 2).
    #[error("{0}")]
    Validation(String),

    /// A pipeline stage failed (exit code 3).
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation(message.into())
    }

    pub fn stage(stage: &'static str, message: impl ToString) -> Self {
        CliError::Stage {
            stage,
            message: message.to_string(),
        }
    }

    pub fn io(stage: &'static str, path: &std::path::Path, err: io::Error) -> Self {
        CliError::stage(stage, format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Stage { .. } => 3,
        }
    }

    /// One-line JSON record describing the failure.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: Inner<'a>,
        }
        #[derive(Serialize)]
        struct Inner<'a> {
            kind: &'a str,
            stage: Option<&'a str>,
            message: String,
            exit_code: i32,
        }
        let (kind, stage, message) = match self {
            CliError::Validation(m) => ("validation", None, m.clone()),
            CliError::Stage { stage, message } => ("stage", Some(*stage), message.clone()),
        };
        serde_json::to_string(&Record {
            error: Inner {
                kind,
                stage,
                message: message.clone(),
                exit_code: self.exit_code(),
            },
        })
        .unwrap_or_else(|_| format!("{{\"error\":{{\"message\":{message:?}}}}}"))
    }
}

/// Path that must exist before a command runs.
pub fn require_file(what: &str, path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "{what} `{}` does not exist",
            path.display()
        )))
    }
}
