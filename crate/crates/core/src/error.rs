use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("unresolved document links: {}", .0.join(", "))]
    DanglingLinks(Vec<String>),
    #[error("document `{0}` takes part in more than one link")]
    ConflictingLink(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model `{kind}` cannot use {given} supervision")]
    SupervisionMismatch { kind: &'static str, given: &'static str },
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("word {word} of language {lang} has no path in the translation tree")]
    NoPath { lang: usize, word: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
