use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NerError>;

#[derive(Debug, Error)]
pub enum NerError {
    /// A caller broke a documented precondition (shape mismatch, empty input, bad id...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric overflow in {0}")]
    NumericOverflow(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint integrity check failed: {0}")]
    Integrity(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("label vocabularies differ: {0}")]
    LabelMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl NerError {
    pub fn contract(msg: impl Into<String>) -> Self {
        NerError::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NerError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category tag used by the CLI for error reporting.
    pub fn category(&self) -> &'static str {
        match self {
            NerError::Contract(_) => "contract",
            NerError::NumericOverflow(_) => "numeric",
            NerError::Parse { .. } => "parse",
            NerError::Config(_) => "config",
            NerError::Integrity(_) => "integrity",
            NerError::Version { .. } => "version",
            NerError::LabelMismatch(_) => "label-mismatch",
            NerError::Io { .. } => "io",
        }
    }
}
