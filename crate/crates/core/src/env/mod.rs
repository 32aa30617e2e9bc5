//! Deterministic simulated delegation environment and the brute-force
//! routing oracle.

use serde::{Deserialize, Serialize};

use crate::chunker::{attach_pii, segment, Chunk, ChunkError};
use crate::corpus::{AnnotatedQuery, Query, SimAnnotation};
use crate::pii::{leakage, surface_in, RemoteExposure};

/// Largest chunk count `brute_force_best` will enumerate.
pub const MAX_BRUTE_FORCE_CHUNKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Local = 0,
    Remote = 1,
}

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Local
        } else {
            Action::Remote
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    #[default]
    Quadratic,
    Linear,
}

/// `task_gain - λ·leak²` (quadratic) or `task_gain - λ·leak` (linear).
pub fn reward(task_gain: f64, leak: f64, lambda: f64, mode: PenaltyMode) -> f64 {
    match mode {
        PenaltyMode::Quadratic => task_gain - lambda * leak * leak,
        PenaltyMode::Linear => task_gain - lambda * leak,
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("plan has {got} actions but the query has {expected} chunks")]
    PlanLength { expected: usize, got: usize },
    #[error("{n} chunks exceed the brute-force bound of {MAX_BRUTE_FORCE_CHUNKS}")]
    TooManyChunks { n: usize },
    #[error("query `{id}`: {source}")]
    Chunking {
        id: String,
        #[source]
        source: ChunkError,
    },
    #[error("query `{id}`: annotation does not match chunking: {detail}")]
    Alignment { id: String, detail: String },
    #[error("invalid world: {0}")]
    InvalidWorld(String),
}

/// Capabilities of the two simulated models plus the reward shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimWorld {
    pub kappa_local: f64,
    pub kappa_remote: f64,
    pub lambda: f64,
    pub penalty: PenaltyMode,
}

impl Default for SimWorld {
    fn default() -> Self {
        SimWorld {
            kappa_local: 0.55,
            kappa_remote: 0.95,
            lambda: 5.0,
            penalty: PenaltyMode::Quadratic,
        }
    }
}

impl SimWorld {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_penalty(mut self, penalty: PenaltyMode) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidWorld(m));
        for (name, k) in [("kappa_local", self.kappa_local), ("kappa_remote", self.kappa_remote)] {
            if !(0.0..=1.0).contains(&k) {
                return bad(format!("{name} {k} outside [0, 1]"));
            }
        }
        if self.kappa_remote <= self.kappa_local {
            return bad(format!(
                "kappa_remote {} must exceed kappa_local {}",
                self.kappa_remote, self.kappa_local
            ));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad(format!("lambda {} must be finite and non-negative", self.lambda));
        }
        Ok(())
    }

    pub fn reward(&self, task_gain: f64, leak: f64) -> f64 {
        reward(task_gain, leak, self.lambda, self.penalty)
    }
}

/// A query chunked, with PII attached and the annotation checked against
/// the chunking. Cheap to evaluate many plans against.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedQuery {
    pub query: Query,
    pub sim: SimAnnotation,
    pub chunks: Vec<Chunk>,
    /// For each chunk, indices into `query.pii` of the units whose surface
    /// occurs in the chunk text under the leak matcher.
    pub exposes: Vec<Vec<usize>>,
    /// For each chunk, its dependency sources.
    pub sources: Vec<Vec<usize>>,
}

impl PreparedQuery {
    pub fn new(q: &AnnotatedQuery) -> Result<Self, EnvError> {
        let id = q.query.id.clone();
        let chunks = segment(&q.query.text)
            .and_then(|c| attach_pii(c, &q.query.pii))
            .map_err(|source| EnvError::Chunking { id: id.clone(), source })?;
        let n = chunks.len();
        if q.sim.difficulty.len() != n {
            return Err(EnvError::Alignment {
                id,
                detail: format!("{} difficulties for {n} chunks", q.sim.difficulty.len()),
            });
        }
        let mut sources = vec![Vec::new(); n];
        for &(d, s) in &q.sim.dependencies {
            if d >= n || s >= n || d == s {
                return Err(EnvError::Alignment {
                    id,
                    detail: format!("dependency ({d}, {s}) invalid for {n} chunks"),
                });
            }
            sources[d].push(s);
        }
        let exposes = chunks
            .iter()
            .map(|c| {
                q.query
                    .pii
                    .iter()
                    .enumerate()
                    .filter(|(_, u)| surface_in(&u.surface, &c.text))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        Ok(PreparedQuery {
            query: q.query.clone(),
            sim: q.sim.clone(),
            chunks,
            exposes,
            sources,
        })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunk_texts(&self) -> Vec<&str> {
        self.chunks.iter().map(|c| c.text.as_str()).collect()
    }

    /// Per-chunk ground-truth PII presence.
    pub fn has_pii(&self) -> Vec<bool> {
        self.chunks.iter().map(|c| !c.pii_ids.is_empty()).collect()
    }

    fn check(&self, actions: &[Action]) -> Result<(), EnvError> {
        if actions.len() != self.len() {
            return Err(EnvError::PlanLength {
                expected: self.len(),
                got: actions.len(),
            });
        }
        Ok(())
    }

    /// Leak fraction of a plan from the precomputed exposure sets; equal to
    /// what [`execute`] reports.
    pub fn leak_fraction(&self, actions: &[Action]) -> f64 {
        let total = self.query.pii.len();
        if total == 0 {
            return 0.0;
        }
        let mut hit = vec![false; total];
        for (t, a) in actions.iter().enumerate() {
            if *a == Action::Remote {
                for &u in &self.exposes[t] {
                    hit[u] = true;
                }
            }
        }
        hit.iter().filter(|h| **h).count() as f64 / total as f64
    }

    /// `(task_gain, reward)` without building prompts.
    pub fn score(&self, actions: &[Action], world: &SimWorld) -> Result<(f64, f64), EnvError> {
        let (gain, _) = quality_oracle(self, actions, world)?;
        Ok((gain, world.reward(gain, self.leak_fraction(actions))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    /// 0 or 1.
    pub task_gain: f64,
    pub leak: f64,
    /// Set when the query has no PII.
    pub no_pii: bool,
    pub reward: f64,
    pub exposure: RemoteExposure,
    pub per_chunk_handled: Vec<bool>,
}

/// Whether each chunk is handled, and the resulting 0/1 task gain.
pub fn quality_oracle(q: &PreparedQuery, actions: &[Action], world: &SimWorld) -> Result<(f64, Vec<bool>), EnvError> {
    q.check(actions)?;
    let handled: Vec<bool> = actions
        .iter()
        .enumerate()
        .map(|(t, a)| {
            let d = q.sim.difficulty[t];
            match a {
                Action::Local => world.kappa_local >= d,
                Action::Remote => {
                    world.kappa_remote >= d && q.sources[t].iter().all(|&s| actions[s] == Action::Remote)
                }
            }
        })
        .collect();
    let gain = if handled.iter().all(|h| *h) { 1.0 } else { 0.0 };
    Ok((gain, handled))
}

/// Runs one episode: one remote prompt per REMOTE chunk.
pub fn execute(q: &PreparedQuery, actions: &[Action], world: &SimWorld) -> Result<EpisodeOutcome, EnvError> {
    let (task_gain, per_chunk_handled) = quality_oracle(q, actions, world)?;
    let prompts: Vec<String> = q
        .chunks
        .iter()
        .zip(actions)
        .filter(|(_, a)| **a == Action::Remote)
        .map(|(c, _)| c.text.clone())
        .collect();
    let exposure = RemoteExposure::from_prompts(prompts, &q.query.pii);
    let leak = leakage(&q.query.pii, &exposure);
    Ok(EpisodeOutcome {
        task_gain,
        leak: leak.fraction,
        no_pii: leak.no_pii,
        reward: world.reward(task_gain, leak.fraction),
        exposure,
        per_chunk_handled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPlan {
    pub actions: Vec<Action>,
    pub reward: f64,
    pub task_gain: f64,
    pub leak: f64,
}

/// Exhaustive search over all `2^n` plans. Ties go to the
/// lexicographically smallest plan with LOCAL < REMOTE.
pub fn brute_force_best(q: &PreparedQuery, world: &SimWorld) -> Result<BestPlan, EnvError> {
    let n = q.len();
    if n > MAX_BRUTE_FORCE_CHUNKS {
        return Err(EnvError::TooManyChunks { n });
    }
    let mut actions = vec![Action::Local; n];
    let mut best: Option<BestPlan> = None;
    for mask in 0u32..(1u32 << n) {
        // chunk 0 is the most significant bit, so ascending masks are
        // ascending in lexicographic order
        for (t, a) in actions.iter_mut().enumerate() {
            *a = Action::from_index(((mask >> (n - 1 - t)) & 1) as usize);
        }
        let (gain, r) = q.score(&actions, world)?;
        if best.as_ref().is_none_or(|b| r > b.reward) {
            best = Some(BestPlan {
                actions: actions.clone(),
                reward: r,
                task_gain: gain,
                leak: q.leak_fraction(&actions),
            });
        }
    }
    Ok(best.expect("at least one plan"))
}
