use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::{embed, Embedder, EmbeddedQuery, EmbeddingConfig};
use super::PolicyError;
use crate::env::Action;
use crate::numerics::{Bound, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Self-attention over all chunks of the query.
    Transformer,
    /// Each chunk scored on its own (ablation).
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub heads: usize,
    pub layers: usize,
    /// Feed-forward width as a multiple of the model width.
    pub ff_mult: usize,
    /// Hidden width of the value head; 0 means the model width.
    pub critic_hidden: usize,
    /// Seed for parameter initialisation.
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            variant: Variant::Transformer,
            heads: 4,
            layers: 2,
            ff_mult: 4,
            critic_hidden: 0,
            seed: 0,
        }
    }
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Tensor {
    let limit = gain * (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(rows, cols, data).expect("shape matches data")
}

fn ones(d: usize) -> Tensor {
    Tensor::full(1, d, 1.0)
}

fn zeros(d: usize) -> Tensor {
    Tensor::zeros(1, d)
}

/// Output of one batched forward pass over stacked chunk rows.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub logits: Var,
    /// `N x 2` log-probabilities over [LOCAL, REMOTE].
    pub log_probs: Var,
    /// `N x 1` value estimates, when a critic was bound.
    pub values: Option<Var>,
}

/// Routing decisions for one query, with the quantities PPO needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingPlan {
    pub actions: Vec<Action>,
    /// log pi(a_t | s_t) of the chosen action.
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub entropy: Vec<f64>,
    pub p_remote: Vec<f64>,
}

impl RoutingPlan {
    /// Builds a plan from `n x 2` log-probabilities. `rng = None` is greedy,
    /// with ties going to LOCAL.
    pub fn from_log_probs(log_probs: &Tensor, values: &Tensor, mut rng: Option<&mut dyn RngCore>) -> Self {
        let n = log_probs.rows();
        let mut plan = RoutingPlan {
            actions: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            entropy: Vec::with_capacity(n),
            p_remote: Vec::with_capacity(n),
        };
        for t in 0..n {
            let (l0, l1) = (log_probs.get(t, 0), log_probs.get(t, 1));
            let (p0, p1) = (l0.exp(), l1.exp());
            let remote = match rng.as_deref_mut() {
                Some(r) => r.gen::<f64>() < p1,
                None => l1 > l0,
            };
            let a = if remote { Action::Remote } else { Action::Local };
            plan.actions.push(a);
            plan.log_probs.push(if remote { l1 } else { l0 });
            plan.values.push(if values.rows() == n { values.get(t, 0) } else { 0.0 });
            let h = -(if p0 > 0.0 { p0 * l0 } else { 0.0 }) - (if p1 > 0.0 { p1 * l1 } else { 0.0 });
            plan.entropy.push(h);
            plan.p_remote.push(p1);
        }
        plan
    }
}

/// How [`Agent::act`] turns probabilities into actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Greedy,
    /// Sample with a ChaCha8 stream seeded by the value.
    Sample(u64),
}

/// Stacks per-query matrices into one and returns the block lengths.
pub fn stack_rows(parts: &[&Tensor]) -> Result<(Tensor, Vec<usize>), PolicyError> {
    let Some(first) = parts.first() else {
        return Err(PolicyError::EmptyInput);
    };
    let d = first.cols();
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    let mut lens = Vec::with_capacity(parts.len());
    for p in parts {
        if p.cols() != d {
            return Err(PolicyError::Config(format!("row width {} differs from {d}", p.cols())));
        }
        if p.rows() == 0 {
            return Err(PolicyError::EmptyInput);
        }
        data.extend_from_slice(p.data());
        lens.push(p.rows());
    }
    let rows = lens.iter().sum();
    Ok((Tensor::new(rows, d, data)?, lens))
}

/// Routing policy: frozen embeddings, actor network and value head.
#[derive(Debug, Clone)]
pub struct Agent {
    pub network: NetworkConfig,
    pub embedding: EmbeddingConfig,
    embedder: Embedder,
    pub actor: ParamStore,
    pub critic: ParamStore,
    /// Set once supervised warm-up has run.
    pub sft_phase: bool,
    /// Counter for deriving sampling streams; saved with the checkpoint.
    pub rng_state: u64,
}

impl Agent {
    pub fn new(network: NetworkConfig, embedding: EmbeddingConfig) -> Result<Self, PolicyError> {
        let embedder = Embedder::from_config(&embedding)?;
        Self::with_embedder(network, embedding, embedder)
    }

    pub fn with_embedder(
        network: NetworkConfig,
        embedding: EmbeddingConfig,
        embedder: Embedder,
    ) -> Result<Self, PolicyError> {
        let d = embedding.dim;
        if d == 0 {
            return Err(PolicyError::Config("model width must be positive".into()));
        }
        if network.variant == Variant::Transformer {
            if network.heads == 0 || d % network.heads != 0 {
                return Err(PolicyError::Config(format!("width {d} not divisible by {} heads", network.heads)));
            }
            if network.layers == 0 || network.ff_mult == 0 {
                return Err(PolicyError::Config("layers and ff_mult must be positive".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(network.seed);
        let actor = init_actor(&network, d, &mut rng);
        let critic = init_critic(&network, d, &mut rng);
        Ok(Agent {
            network,
            embedding,
            embedder,
            actor,
            critic,
            sft_phase: false,
            rng_state: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.embedding.dim
    }

    pub fn variant(&self) -> Variant {
        self.network.variant
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn embed(&self, texts: &[&str]) -> Result<EmbeddedQuery, PolicyError> {
        embed(texts, &self.embedder, &self.embedding)
    }

    /// Batched forward pass on `tape`. `x` stacks the chunk rows of several
    /// queries; `lens` gives the number of chunks of each.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        actor: &Bound,
        critic: Option<&Bound>,
        x: Var,
        lens: &[usize],
    ) -> Result<ForwardVars, PolicyError> {
        let feats = match self.network.variant {
            Variant::Transformer => {
                let mut h = x;
                for l in 0..self.network.layers {
                    h = self.block(tape, actor, h, lens, l)?;
                }
                norm(tape, actor, h, "final_ln")?
            }
            Variant::Mlp => {
                let h = linear(tape, actor, x, "mlp.w1", "mlp.b1")?;
                let h = tape.gelu(h)?;
                let h = linear(tape, actor, h, "mlp.w2", "mlp.b2")?;
                tape.gelu(h)?
            }
        };
        let logits = linear(tape, actor, feats, "head.w", "head.b")?;
        let log_probs = tape.log_softmax(logits)?;
        let values = match critic {
            Some(c) => {
                // transformer: detached h_t; mlp: the embedded row itself
                let s = match self.network.variant {
                    Variant::Transformer => tape.detach(feats),
                    Variant::Mlp => tape.detach(x),
                };
                let h = linear(tape, c, s, "critic.w1", "critic.b1")?;
                let h = tape.gelu(h)?;
                let h = linear(tape, c, h, "critic.w2", "critic.b2")?;
                let h = tape.gelu(h)?;
                Some(linear(tape, c, h, "critic.w3", "critic.b3")?)
            }
            None => None,
        };
        Ok(ForwardVars { logits, log_probs, values })
    }

    fn block(&self, tape: &mut Tape, p: &Bound, x: Var, lens: &[usize], l: usize) -> Result<Var, PolicyError> {
        let d = self.d();
        let heads = self.network.heads;
        let dk = d / heads;
        let pre = format!("layer{l}.");
        let n = |s: &str| format!("{pre}{s}");

        let a = norm(tape, p, x, &n("ln1"))?;
        let q = linear(tape, p, a, &n("attn.wq"), &n("attn.bq"))?;
        let k = linear(tape, p, a, &n("attn.wk"), &n("attn.bk"))?;
        let v = linear(tape, p, a, &n("attn.wv"), &n("attn.bv"))?;
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dk, dk)?;
            let kh = tape.slice_cols(k, h * dk, dk)?;
            let vh = tape.slice_cols(v, h * dk, dk)?;
            outs.push(tape.segment_attention(qh, kh, vh, lens)?);
        }
        let o = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
        let o = linear(tape, p, o, &n("attn.wo"), &n("attn.bo"))?;
        let x = tape.add(x, o)?;

        let f = norm(tape, p, x, &n("ln2"))?;
        let f = linear(tape, p, f, &n("ff.w1"), &n("ff.b1"))?;
        let f = tape.gelu(f)?;
        let f = linear(tape, p, f, &n("ff.w2"), &n("ff.b2"))?;
        Ok(tape.add(x, f)?)
    }

    /// Log-probabilities (`N x 2`) and values (`N x 1`) for several queries at
    /// once, without recording gradients.
    pub fn evaluate(&self, xs: &[&Tensor]) -> Result<(Tensor, Tensor), PolicyError> {
        let (x, lens) = stack_rows(xs)?;
        if x.cols() != self.d() {
            return Err(PolicyError::Config(format!("input width {} but model width {}", x.cols(), self.d())));
        }
        let mut tape = Tape::new();
        let actor = self.actor.bind_frozen(&mut tape);
        let critic = self.critic.bind_frozen(&mut tape);
        let xv = tape.constant(x);
        let out = self.forward_tape(&mut tape, &actor, Some(&critic), xv, &lens)?;
        let values = out.values.map(|v| tape.value(v).clone()).unwrap_or_else(|| Tensor::zeros(0, 1));
        Ok((tape.value(out.log_probs).clone(), values))
    }

    /// `n x 2` routing probabilities for one query.
    pub fn probs(&self, e: &EmbeddedQuery) -> Result<Tensor, PolicyError> {
        Ok(self.evaluate(&[&e.vectors])?.0.map(f64::exp))
    }

    pub fn act(&self, e: &EmbeddedQuery, mode: ActMode) -> Result<RoutingPlan, PolicyError> {
        let (lp, v) = self.evaluate(&[&e.vectors])?;
        Ok(match mode {
            ActMode::Greedy => RoutingPlan::from_log_probs(&lp, &v, None),
            ActMode::Sample(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                RoutingPlan::from_log_probs(&lp, &v, Some(&mut rng))
            }
        })
    }

    /// Embeds and routes chunk texts in one call.
    pub fn route(&self, texts: &[&str], mode: ActMode) -> Result<RoutingPlan, PolicyError> {
        self.act(&self.embed(texts)?, mode)
    }
}

fn linear(tape: &mut Tape, p: &Bound, x: Var, w: &str, b: &str) -> Result<Var, PolicyError> {
    let y = tape.matmul(x, p.var(w)?)?;
    Ok(tape.add_row(y, p.var(b)?)?)
}

fn norm(tape: &mut Tape, p: &Bound, x: Var, prefix: &str) -> Result<Var, PolicyError> {
    let y = tape.layer_norm(x)?;
    let y = tape.mul_row(y, p.var(&format!("{prefix}.g"))?)?;
    Ok(tape.add_row(y, p.var(&format!("{prefix}.b"))?)?)
}

fn init_actor(cfg: &NetworkConfig, d: usize, rng: &mut ChaCha8Rng) -> ParamStore {
    let mut s = ParamStore::new();
    match cfg.variant {
        Variant::Transformer => {
            let ff = d * cfg.ff_mult;
            // Residual branches start small so the embedding dominates early on.
            let branch = 1.0 / (2.0 * cfg.layers as f64).sqrt();
            for l in 0..cfg.layers {
                let n = |x: &str| format!("layer{l}.{x}");
                s.insert(n("ln1.g"), ones(d));
                s.insert(n("ln1.b"), zeros(d));
                for w in ["q", "k", "v"] {
                    s.insert(n(&format!("attn.w{w}")), xavier(rng, d, d, 1.0));
                    s.insert(n(&format!("attn.b{w}")), zeros(d));
                }
                s.insert(n("attn.wo"), xavier(rng, d, d, branch));
                s.insert(n("attn.bo"), zeros(d));
                s.insert(n("ln2.g"), ones(d));
                s.insert(n("ln2.b"), zeros(d));
                s.insert(n("ff.w1"), xavier(rng, d, ff, 1.0));
                s.insert(n("ff.b1"), zeros(ff));
                s.insert(n("ff.w2"), xavier(rng, ff, d, branch));
                s.insert(n("ff.b2"), zeros(d));
            }
            s.insert("final_ln.g", ones(d));
            s.insert("final_ln.b", zeros(d));
        }
        Variant::Mlp => {
            s.insert("mlp.w1", xavier(rng, d, d, 1.0));
            s.insert("mlp.b1", zeros(d));
            s.insert("mlp.w2", xavier(rng, d, d, 1.0));
            s.insert("mlp.b2", zeros(d));
        }
    }
    s.insert("head.w", xavier(rng, d, 2, 0.1));
    s.insert("head.b", zeros(2));
    s
}

fn init_critic(cfg: &NetworkConfig, d: usize, rng: &mut ChaCha8Rng) -> ParamStore {
    let h = if cfg.critic_hidden == 0 { d } else { cfg.critic_hidden };
    let mut s = ParamStore::new();
    s.insert("critic.w1", xavier(rng, d, h, 1.0));
    s.insert("critic.b1", zeros(h));
    s.insert("critic.w2", xavier(rng, h, h, 1.0));
    s.insert("critic.b2", zeros(h));
    s.insert("critic.w3", xavier(rng, h, 1, 0.1));
    s.insert("critic.b3", zeros(1));
    s
}
