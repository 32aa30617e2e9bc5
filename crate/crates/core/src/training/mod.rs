//! Supervised warm-up, PPO fine-tuning, evaluation against baselines and
//! the brute-force optimum, and the λ sweep.

mod eval;
mod experiment;
mod ppo;
mod sft;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use eval::{evaluate, label_accuracy, oracle_report, EvalReport, Method, QueryOutcome};
pub use experiment::{
    read_reward_curve, sweep_lambda, write_reward_curve, write_sweep_csv, CorpusSource, ExperimentConfig, SweepRow,
};
pub use ppo::{
    clipped_surrogate, collect_rollouts, normalize_advantages, ppo_finetune, ppo_loss, CurvePoint, LossStats,
    PpoReport, RolloutBatch,
};
pub use sft::{sft_loss, sft_warmup, SftReport};

use crate::corpus::AnnotatedQuery;
use crate::env::{EnvError, PenaltyMode, PreparedQuery};
use crate::numerics::{NumericsError, Tensor};
use crate::policy::{Agent, PolicyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub epochs: usize,
    /// Queries per optimizer step.
    pub batch: usize,
    pub lr: f64,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig { epochs: 1, batch: 32, lr: 3e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub lr: f64,
    /// Episodes (queries) per rollout.
    pub batch: usize,
    /// Number of rollout iterations.
    pub max_steps: usize,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Optimization passes over each rollout batch.
    pub epochs_per_batch: usize,
    /// Optional global gradient-norm clip applied by the optimizer.
    pub max_grad_norm: Option<f64>,
    /// Rollout shards evaluated in parallel; 1 is serial.
    pub rollout_workers: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lr: 1e-5,
            batch: 64,
            max_steps: 256,
            clip_eps: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            epochs_per_batch: 4,
            max_grad_norm: None,
            rollout_workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub sft: SftConfig,
    pub ppo: PpoConfig,
    pub lambda: f64,
    pub penalty: PenaltyMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sft: SftConfig::default(),
            ppo: PpoConfig::default(),
            lambda: 5.0,
            penalty: PenaltyMode::Quadratic,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.sft.lr > 0.0) || !(self.ppo.lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.ppo.clip_eps > 0.0) {
            return bad("clip_eps must be positive");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be a finite value >= 0");
        }
        if self.sft.batch == 0 || self.ppo.batch == 0 || self.ppo.epochs_per_batch == 0 || self.ppo.rollout_workers == 0 {
            return bad("batch sizes, epochs_per_batch and rollout_workers must be positive");
        }
        if !(self.ppo.value_coef >= 0.0) || !(self.ppo.entropy_coef >= 0.0) {
            return bad("loss coefficients must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("method `{0}` needs a trained checkpoint")]
    MissingCheckpoint(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Prepared queries with their network inputs cached.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub queries: Vec<PreparedQuery>,
    /// `n_i x d` embedded chunk rows per query.
    pub inputs: Vec<Tensor>,
}

impl Dataset {
    pub fn new(queries: &[AnnotatedQuery], agent: &Agent) -> Result<Self, TrainError> {
        let prepared = queries
            .iter()
            .map(PreparedQuery::new)
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_prepared(prepared, agent)
    }

    pub fn from_prepared(queries: Vec<PreparedQuery>, agent: &Agent) -> Result<Self, TrainError> {
        let inputs = queries
            .par_iter()
            .map(|q| agent.embed(&q.chunk_texts()).map(|e| e.vectors))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset { queries, inputs })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn total_chunks(&self) -> usize {
        self.queries.iter().map(|q| q.len()).sum()
    }
}

/// Heuristic warm-up label per chunk: 0 (LOCAL) if it carries PII, else 1.
pub fn heuristic_labels(q: &PreparedQuery) -> Vec<usize> {
    q.has_pii().iter().map(|&p| usize::from(!p)).collect()
}
