use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Field-level parse failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("invalid {what} length: expected {expected} hex chars, found {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid hex in {what}: {value:?}")]
    Hex { what: &'static str, value: String },
    #[error("invalid {field}: {value:?}")]
    Field { field: &'static str, value: String },
    #[error("expected {expected} columns, found {found}")]
    Columns { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: u64,
        #[source]
        source: ParseError,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("length mismatch: {labels} labels, {outdegrees} outdegrees, {methods} method ids")]
    LengthMismatch {
        labels: usize,
        outdegrees: usize,
        methods: usize,
    },
    #[error("no tail to fit: {0}")]
    NoTail(String),
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("unknown hash {0}")]
    UnknownHash(String),
    #[error("cycle detected among building blocks at {0}")]
    BlockCycle(String),
    #[error("stage {stage}: missing upstream artifact {path}")]
    MissingArtifact { stage: String, path: PathBuf },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Non-fatal findings (rejected rows, conflicts) reported alongside a result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<u64>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub items: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        self.items.push(Diagnostic { line: None, message });
    }

    pub fn at_line(&mut self, line: u64, message: impl Into<String>) {
        let message = message.into();
        log::warn!("line {line}: {message}");
        self.items.push(Diagnostic {
            line: Some(line),
            message,
        });
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.items.extend(other.items);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items.iter()
    }
}
