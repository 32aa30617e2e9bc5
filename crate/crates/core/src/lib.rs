//! Learned chunk-level delegation between a trusted local model and an
//! untrusted remote model.
//!
//! A query is split into sentence chunks, a small policy network decides per
//! chunk whether it may leave the trust boundary, and training trades task
//! quality against a quadratic penalty on the fraction of PII exposed.

pub mod numerics;
pub mod chunker;
pub mod corpus;
pub mod pii;
pub mod env;
pub mod policy;
pub mod training;
