use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::{Embedder, EmbeddingConfig};
use super::network::{Agent, NetworkConfig, Variant};
use super::PolicyError;
use crate::numerics::{ParamStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of an [`Agent`]. Parameters are stored by name as nested
/// row arrays; actor and critic share one map (critic names start with
/// `critic.`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub variant: Variant,
    pub d: usize,
    pub heads: usize,
    pub layers: usize,
    pub network: NetworkConfig,
    pub embedding: EmbeddingConfig,
    pub parameters: BTreeMap<String, Vec<Vec<f64>>>,
    pub sft_phase: bool,
    pub rng_state: u64,
}

impl Checkpoint {
    pub fn from_agent(agent: &Agent) -> Self {
        let parameters = agent
            .actor
            .iter()
            .chain(agent.critic.iter())
            .map(|(n, t)| (n.to_string(), t.to_rows()))
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            variant: agent.network.variant,
            d: agent.d(),
            heads: agent.network.heads,
            layers: agent.network.layers,
            network: agent.network.clone(),
            embedding: agent.embedding.clone(),
            parameters,
            sft_phase: agent.sft_phase,
            rng_state: agent.rng_state,
        }
    }

    /// Rebuilds the agent. Every parameter the architecture expects must be
    /// present with the right shape, and nothing else.
    pub fn into_agent(self) -> Result<Agent, PolicyError> {
        let embedder = Embedder::from_config(&self.embedding)?;
        self.into_agent_with(embedder)
    }

    pub fn into_agent_with(mut self, embedder: Embedder) -> Result<Agent, PolicyError> {
        let bad = |m: String| Err(PolicyError::Checkpoint(m));
        if self.version != CHECKPOINT_VERSION {
            return bad(format!("version {} (expected {CHECKPOINT_VERSION})", self.version));
        }
        if self.variant != self.network.variant
            || self.d != self.embedding.dim
            || self.heads != self.network.heads
            || self.layers != self.network.layers
        {
            return bad("header fields disagree with the stored configuration".into());
        }
        let mut agent = Agent::with_embedder(self.network.clone(), self.embedding.clone(), embedder)?;
        fill(&mut agent.actor, &mut self.parameters)?;
        fill(&mut agent.critic, &mut self.parameters)?;
        if let Some(extra) = self.parameters.keys().next() {
            return bad(format!("unexpected parameter `{extra}`"));
        }
        agent.sft_phase = self.sft_phase;
        agent.rng_state = self.rng_state;
        Ok(agent)
    }
}

fn fill(store: &mut ParamStore, params: &mut BTreeMap<String, Vec<Vec<f64>>>) -> Result<(), PolicyError> {
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let rows = params
            .remove(&name)
            .ok_or_else(|| PolicyError::Checkpoint(format!("missing parameter `{name}`")))?;
        let t = Tensor::from_rows(&rows).map_err(|e| PolicyError::Checkpoint(format!("`{name}`: {e}")))?;
        let slot = store.get_mut(&name).expect("name taken from the store");
        if t.shape() != slot.shape() {
            return Err(PolicyError::Checkpoint(format!(
                "`{name}` has shape {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        if !t.is_finite() {
            return Err(PolicyError::Checkpoint(format!("`{name}` holds non-finite values")));
        }
        *slot = t;
    }
    Ok(())
}

impl Agent {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        let json = serde_json::to_string(&Checkpoint::from_agent(self))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ck.into_agent()
    }
}
