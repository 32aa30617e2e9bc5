//! Routing policy: frozen chunk embeddings, a small transformer (or a
//! per-chunk MLP) producing LOCAL/REMOTE probabilities, and a value head.

mod checkpoint;
pub mod embed;
mod network;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use embed::{
    embed, sinusoidal_encoding, EmbeddedQuery, Embedder, EmbeddingConfig, EmbeddingProvider, HashingEmbedder,
    PrecomputedEmbedder, ProviderSpec,
};
pub use network::{stack_rows, ActMode, Agent, ForwardVars, NetworkConfig, RoutingPlan, Variant};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("query has no chunks")]
    EmptyInput,
    #[error("no precomputed vector for chunk {0:?}")]
    MissingVector(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
