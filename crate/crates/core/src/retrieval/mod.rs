//! Numeric substrate shared by the search tools: embeddings, cosine ranking,
//! exhaustive dense search, labeled pair pools and PageRank salience.

mod embedding;
mod encoder;
mod pagerank;
mod pairs;

use thiserror::Error;

pub use embedding::{
    cosine, dense_top_k, fusion_embedding, norm, rank_by_score, rank_order, EmbeddingIndex,
    ScoredNode,
};
pub use encoder::{encode_text, HashedBagOfWords, TextEncoder};
pub use pagerank::{
    compute_pagerank, salience_top_k_nodes, salience_top_k_pairs, PageRankConfig, SalienceScores,
};
pub use pairs::{pair_dense_top_k, pair_order, PairEntry, PairPool, ScoredPair};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("lambda_r must be in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("embedding dims must be positive")]
    ZeroDims,
    #[error("embedding file does not start with magic bytes AGLE")]
    BadMagic,
    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u32),
    #[error("embedding data truncated: expected {expected} bytes/values, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("embedding row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("embedding has {rows} rows but the graph has {nodes} nodes")]
    RowCountMismatch { rows: usize, nodes: usize },
    #[error("pair pool line {line}: {reason}")]
    PairInvalid { line: usize, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
