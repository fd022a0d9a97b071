use std::path::Path;

use serde_json::json;
use thiserror::Error;

/// Failure of a CLI invocation, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Validation { message: String, field: Option<String>, line: Option<usize>, column: Option<usize> },

    #[error("{0}")]
    Numeric(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation { message: message.into(), field: Some(field.into()), line: None, column: None }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation { .. } => "validation",
            CliError::Numeric(_) => "numeric",
            CliError::Io { .. } => "io",
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> String {
        let mut e = json!({ "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() });
        match self {
            CliError::Validation { field, line, column, .. } => {
                e["field"] = json!(field);
                e["line"] = json!(line);
                e["column"] = json!(column);
            }
            CliError::Io { path, .. } => e["path"] = json!(path),
            CliError::Numeric(_) => {}
        }
        json!({ "error": e }).to_string()
    }
}

impl From<wgqed::Error> for CliError {
    fn from(e: wgqed::Error) -> Self {
        use wgqed::Error as E;
        match &e {
            E::Parameter { name, .. } => CliError::validation(*name, e.to_string()),
            E::NoDarkState { .. } => CliError::validation("m", e.to_string()),
            E::Dimension(_) | E::DegenerateState(_) | E::Basis(_) => CliError::Validation { message: e.to_string(), field: None, line: None, column: None },
            E::Stiffness { .. } | E::Invariant { .. } | E::Eigensolver { .. } => CliError::Numeric(e.to_string()),
        }
    }
}
