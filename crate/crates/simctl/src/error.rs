use std::fmt;
use std::path::PathBuf;

use hercules_calib::CalibError;
use hercules_core::CoreError;

/// One failed scenario check, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationError {
    pub issues: Vec<Issue>,
}

impl ValidationError {
    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn into_result(self) -> Result<(), ValidationError> {
        if self.issues.is_empty() {
            Ok(())
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario is invalid ({} issue", self.issues.len())?;
        if self.issues.len() != 1 {
            write!(f, "s")?;
        }
        write!(f, ")")?;
        for issue in &self.issues {
            write!(f, "\n  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error at `{path}`: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid override `{text}`: {msg}")]
    Override { text: String, msg: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error("{path}: {msg}")]
    Csv { path: PathBuf, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl SimError {
    /// Input that failed to parse or validate, as opposed to a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SimError::Parse { .. } | SimError::Override { .. } | SimError::Validation(_) | SimError::Csv { .. } | SimError::InvalidArgument(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}
