//! Caption retrieval for prompt augmentation: caption embeddings, an exact
//! cosine-similarity index stored as JSON lines, and prompt rendering.

mod embed;
mod index;
mod prompt;

use thiserror::Error;

pub use embed::{
    embed_caption, tokenize, Embedder, EmbedderDescriptor, LocalEmbedder, RemoteEmbedder, API_KEY_ENV,
    DEFAULT_LOCAL_DIMENSION, LOCAL_HASHING,
};
pub use index::{
    build_index, query_nearest, read_caption_file, resolve_step_ref, CaptionEntry, Exclude, Index, RetrievalHit,
    INDEX_FORMAT, INDEX_VERSION,
};
pub use prompt::{
    assemble_prompt, prepare_retrieved_step, PromptTemplate, BLOCK_CLOSE, BLOCK_OPEN, DEFAULT_INSTRUCTION,
    DEFAULT_TEMPLATE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("text has no word tokens")]
    EmptyText,
    #[error("index is empty")]
    EmptyIndex,
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("retrieved STEP file missing: {0}")]
    MissingStepFile(String),
    #[error("retrieved STEP file unusable: {0}")]
    Step(String),
    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Io(String),
}
