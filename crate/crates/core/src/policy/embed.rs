//! Frozen chunk embeddings: feature hashing or precomputed vectors, plus
//! sinusoidal positional encodings.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::numerics::Tensor;

/// Where chunk vectors come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    Hashing,
    /// JSON file `{"dim": d, "vectors": {"<chunk text>": [..]}}`.
    Precomputed { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub positional: bool,
    /// Multiplier on the positional encoding before it is added.
    pub pe_scale: f64,
    pub provider: ProviderSpec,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 384,
            positional: true,
            pe_scale: 1.0,
            provider: ProviderSpec::Hashing,
        }
    }
}

/// Maps chunk text to a unit-norm vector.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>, PolicyError>;
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for &b in *p {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Signed feature hashing of lowercased character 3–5-grams and word unigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<Self, PolicyError> {
        if dim == 0 {
            return Err(PolicyError::Config("embedding dimension must be positive".into()));
        }
        Ok(HashingEmbedder { dim })
    }

    fn add(&self, v: &mut [f64], kind: &[u8], feature: &[u8]) {
        let h = fnv1a(&[kind, feature]);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if (h >> 40) & 1 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, PolicyError> {
        let lower = text.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let mut v = vec![0.0; self.dim];
        let mut buf = String::new();
        for n in 3..=5 {
            for w in chars.windows(n) {
                buf.clear();
                buf.extend(w);
                self.add(&mut v, b"c:", buf.as_bytes());
            }
        }
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            self.add(&mut v, b"w:", word.as_bytes());
        }
        if v.iter().all(|x| *x == 0.0) {
            self.add(&mut v, b"t:", lower.as_bytes());
        }
        l2_normalize(&mut v);
        Ok(v)
    }
}

#[derive(Debug, Deserialize)]
struct VectorFile {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

/// Vectors computed offline, keyed by exact chunk text; normalized on load.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbedder {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbedder {
    pub fn from_map(dim: usize, mut table: HashMap<String, Vec<f64>>) -> Result<Self, PolicyError> {
        for (k, v) in table.iter_mut() {
            if v.len() != dim {
                return Err(PolicyError::Config(format!(
                    "vector for {k:?} has {} values, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(PolicyError::Config(format!("vector for {k:?} is not finite")));
            }
            l2_normalize(v);
        }
        Ok(PrecomputedEmbedder { dim, table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let f: VectorFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_map(f.dim, f.vectors)
    }
}

impl EmbeddingProvider for PrecomputedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, PolicyError> {
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| PolicyError::MissingVector(text.to_string()))
    }
}

/// Runtime provider built from an [`EmbeddingConfig`].
#[derive(Debug, Clone)]
pub enum Embedder {
    Hashing(HashingEmbedder),
    Precomputed(PrecomputedEmbedder),
}

impl Embedder {
    pub fn from_config(cfg: &EmbeddingConfig) -> Result<Self, PolicyError> {
        match &cfg.provider {
            ProviderSpec::Hashing => Ok(Embedder::Hashing(HashingEmbedder::new(cfg.dim)?)),
            ProviderSpec::Precomputed { path } => {
                let p = PrecomputedEmbedder::load(path)?;
                if p.dim() != cfg.dim {
                    return Err(PolicyError::Config(format!(
                        "precomputed vectors have dim {}, config says {}",
                        p.dim(),
                        cfg.dim
                    )));
                }
                Ok(Embedder::Precomputed(p))
            }
        }
    }

    fn provider(&self) -> &dyn EmbeddingProvider {
        match self {
            Embedder::Hashing(h) => h,
            Embedder::Precomputed(p) => p,
        }
    }
}

impl EmbeddingProvider for Embedder {
    fn dim(&self) -> usize {
        self.provider().dim()
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, PolicyError> {
        self.provider().embed_text(text)
    }
}

/// `pe[pos, 2k] = sin(pos / 10000^(2k/d))`, `pe[pos, 2k+1] = cos(same)`.
pub fn sinusoidal_encoding(n: usize, d: usize) -> Tensor {
    let mut pe = Tensor::zeros(n, d);
    for pos in 0..n {
        for i in 0..d {
            let k2 = (i - i % 2) as f64;
            let angle = pos as f64 / 10000f64.powf(k2 / d as f64);
            pe.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// Chunk vectors for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedQuery {
    /// `n x d` network input: content vectors plus (scaled) positional rows.
    pub vectors: Tensor,
    /// `n x d` positional rows that were added (zeros when disabled).
    pub positional: Tensor,
    pub n: usize,
}

pub fn embed(texts: &[&str], provider: &dyn EmbeddingProvider, cfg: &EmbeddingConfig) -> Result<EmbeddedQuery, PolicyError> {
    if texts.is_empty() {
        return Err(PolicyError::EmptyInput);
    }
    let d = provider.dim();
    if d != cfg.dim {
        return Err(PolicyError::Config(format!("provider dim {d} differs from config dim {}", cfg.dim)));
    }
    let n = texts.len();
    let mut data = Vec::with_capacity(n * d);
    for t in texts {
        data.extend(provider.embed_text(t)?);
    }
    let mut vectors = Tensor::new(n, d, data)?;
    let positional = if cfg.positional {
        let mut pe = sinusoidal_encoding(n, d);
        pe.scale_in_place(cfg.pe_scale);
        vectors.add_assign(&pe);
        pe
    } else {
        Tensor::zeros(n, d)
    };
    Ok(EmbeddedQuery { vectors, positional, n })
}
