//! Description embeddings: a pluggable embedder, batch and incremental PCA,
//! per-year tier files and the adaptive retrieval rule.

mod bench;
mod model;
mod pca;
mod retrieve;
mod tiers;

pub use bench::{benchmark_pca, cost_table_csv, synthetic_rows, CostRow, CountingAlloc, DEFAULT_DIMS};
pub use model::{hash_embed, tokens, Embedder, ModelId};
pub use pca::{
    fit_incremental_pca, fit_incremental_rows, fit_pca, from_matrix, to_matrix, IncrementalPca, PcaModel,
};
pub use retrieve::{decide, retrieve, select_rows, Decision, EmbeddingResponse, Origin, TierUsed, IPCA_BATCH};
pub use tiers::{
    build_tiers, decode_tier, encode_tier, graph_years, refresh_tiers, update_tiers, year_descriptions, BuildReport,
    TierConfig, TierMaintainer, TierMatrix, TierSet, TierStore, ALPHA_FILE, BETA_FILE, FULL_FILE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedderError {
    #[error("text is empty")]
    EmptyText,
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("component count {k} outside 1..={max}")]
    ComponentRange { k: usize, max: usize },
    #[error("requested dimension {d_r} outside 1..={d}")]
    DimOutOfRange { d_r: usize, d: usize },
    #[error("no embedding tiers for {year} {model}")]
    MissingTier { year: i32, model: ModelId },
    #[error("tier file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
