use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report. Each variant maps to a stable
/// module-qualified code (see [`Error::code`]) which the CLI prints.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to fetch {url}: {reason}")]
    Fetch { url: String, reason: String },

    #[error("integrity check failed for {path}: expected checksum {expected}, found {found}")]
    Integrity {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("CoNLL-U parse error at line {line}: {message}")]
    ConlluParse { line: usize, message: String },

    #[error("CoNLL-U structure error at line {line}: {message}")]
    ConlluStructure { line: usize, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("pattern syntax error at byte {offset}: {message}")]
    PatternSyntax { offset: usize, message: String },

    #[error("voice pool for {voice} is empty")]
    EmptyPool { voice: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pool for {voice} is too small: {required} distinct sentences required, {available} available")]
    Capacity {
        voice: String,
        required: usize,
        available: usize,
    },

    #[error("derivation failed for instance {instance}: {message}")]
    Derivation { instance: String, message: String },

    #[error("format error at record {record}: {message}")]
    Format { record: usize, message: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("missing embedding for instance {instance}: key {key}")]
    MissingEmbedding { instance: String, key: String },

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Module-qualified error code, e.g. `treebank.parse`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Fetch { .. } => "treebank.fetch",
            Error::Integrity { .. } => "treebank.integrity",
            Error::ConlluParse { .. } => "treebank.parse",
            Error::ConlluStructure { .. } => "treebank.structure",
            Error::Argument(_) => "core.argument",
            Error::PatternSyntax { .. } => "pattern.syntax",
            Error::EmptyPool { .. } => "pattern.pool",
            Error::Config(_) => "blm.config",
            Error::Capacity { .. } => "blm.capacity",
            Error::Derivation { .. } => "blm.derivation",
            Error::Format { .. } => "io.format",
            Error::Numeric(_) => "solver.numeric",
            Error::MissingEmbedding { .. } => "solver.data",
            Error::UndefinedStatistic(_) => "eval.undefined",
            Error::Io { .. } => "io.file",
            Error::Json(_) => "io.json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
