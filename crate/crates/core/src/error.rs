use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("invariant `{invariant}` violated: {detail}")]
    Invariant { invariant: &'static str, detail: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("no characters found under {}", .0.display())]
    NoCharacters(PathBuf),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("character overlap between train and test: {0:?}")]
    CharacterOverlap(Vec<String>),

    #[error("characters assigned to neither split: {0:?}")]
    UncoveredCharacters(Vec<String>),

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    #[error("{what} schema version {found} is not supported (expected {expected})")]
    SchemaVersion { what: &'static str, found: u32, expected: u32 },

    #[error("archive stage {found} not accepted (expected {expected})")]
    Stage { found: u8, expected: &'static str },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("key mismatch, missing: {missing:?}")]
    KeyMismatch { missing: Vec<String> },

    #[error("generated and target trees differ: {0}")]
    EvalMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invariant(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant {
            invariant,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
