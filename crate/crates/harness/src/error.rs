use std::path::PathBuf;

use deid_core::NerError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] NerError),

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("invalid arguments: {0}")]
    Usage(String),
}

impl HarnessError {
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Core(e) => e.category(),
            HarnessError::Csv { .. } => "io",
            HarnessError::Usage(_) => "usage",
        }
    }

    /// Process exit code for this error; 0 is success and 2 is reserved for
    /// argument parsing failures.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" => 2,
            "config" => 3,
            "parse" => 4,
            "io" => 5,
            "integrity" | "version" => 6,
            "label-mismatch" => 7,
            _ => 8,
        }
    }
}

pub(crate) fn csv_err(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Csv { path, source }
}
