use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid item {id:?}: {reason}")]
    InvalidItem { id: String, reason: String },

    #[error("duplicate item id {0:?}")]
    DuplicateId(String),

    #[error("catalog is empty")]
    EmptyCatalog,

    #[error("items share an identical token sequence: {}", .0.join(", "))]
    TitleCollision(Vec<String>),

    #[error("unknown item id {0:?}")]
    UnknownItem(String),

    #[error("prefix {0:?} leaves the catalog trie")]
    DeadPrefix(Vec<String>),

    #[error("scorer error: {0}")]
    Scorer(String),

    #[error("invalid assistant distribution: {0}")]
    Assistant(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("decoding failed: {0}")]
    Decode(String),

    #[error("catalog has {size} items, above the enumeration guard of {limit}")]
    EnumerationGuard { size: usize, limit: usize },

    #[error("{}:{line}: {reason}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
