//! Vector memory of knowledge-base chunks and past analysis reports.

mod chunk;
mod persist;
mod store;

pub use chunk::{chunk_text, ChunkingConfig};
pub use store::{epoch, ingest_corpus, MemoryItem, MemorySource, MemoryStore, Retrieved};

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("dimension mismatch: store has {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("duplicate memory id `{0}`")]
    DuplicateId(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("store format: {0}")]
    Format(String),
    #[error(transparent)]
    Embed(#[from] crate::embedding::EmbedError),
}
