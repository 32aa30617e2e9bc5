//! HTTP gateway around a trained routing policy.
//!
//! Each request is split into sentences, PII is found with the rule
//! detector, and the greedy policy decides per sentence. LOCAL sentences
//! go to the local endpoint, REMOTE ones to the remote endpoint (one
//! request each), and the local endpoint composes the final answer from
//! all partial outputs in order. Text routed LOCAL never appears in a
//! remote request.

pub mod config;
pub mod router;
pub mod server;
pub mod transport;

pub use config::{EndpointConfig, GatewayConfig, Role};
pub use router::{ChunkResult, Gateway, ModelUsed, RouteResult};
pub use server::{app, serve, RouteRequest};
pub use transport::{ChatMessage, ChatRequest, HttpTransport, Transport, TransportError};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid gateway configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("routing policy failed: {0}")]
    Policy(String),
    #[error("local endpoint failed: {0}")]
    LocalEndpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
