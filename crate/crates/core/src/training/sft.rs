use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{heuristic_labels, label_accuracy, Dataset, SftConfig, TrainError};
use crate::numerics::{Adam, Bound, Tape, Var};
use crate::policy::{stack_rows, Agent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftReport {
    /// Mean per-query loss at each optimizer step.
    pub losses: Vec<f64>,
    /// Greedy agreement with the heuristic labels on the training set.
    pub train_accuracy: f64,
}

/// Summed per-chunk BCE against the heuristic labels, averaged over the
/// queries in `batch`.
pub fn sft_loss(tape: &mut Tape, agent: &Agent, actor: &Bound, data: &Dataset, batch: &[usize]) -> Result<Var, TrainError> {
    let xs: Vec<_> = batch.iter().map(|&i| &data.inputs[i]).collect();
    let (x, lens) = stack_rows(&xs)?;
    let labels: Vec<usize> = batch.iter().flat_map(|&i| heuristic_labels(&data.queries[i])).collect();
    let xv = tape.constant(x);
    let out = agent.forward_tape(tape, actor, None, xv, &lens)?;
    let picked = tape.pick(out.log_probs, &labels)?;
    let total = tape.sum(picked)?;
    Ok(tape.scale(total, -1.0 / batch.len() as f64)?)
}

/// Phase-1 warm-up: imitate "LOCAL iff the chunk has PII" with Adam.
pub fn sft_warmup(agent: &mut Agent, data: &Dataset, cfg: &SftConfig, seed: u64) -> Result<SftReport, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(TrainError::Config("sft batch and lr must be positive".into()));
    }
    let mut opt = Adam::new(&agent.actor, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::new();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            let mut tape = Tape::new();
            let actor = agent.actor.bind(&mut tape);
            let loss = sft_loss(&mut tape, agent, &actor, data, batch)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::NonFinite {
                    step: losses.len(),
                    detail: format!("sft loss {value}"),
                });
            }
            let grads = actor.collect(&tape.backward(loss)?);
            drop(actor);
            opt.step(&mut agent.actor, &grads);
            losses.push(value);
        }
    }
    agent.sft_phase = true;
    let train_accuracy = label_accuracy(agent, data)?;
    Ok(SftReport { losses, train_accuracy })
}
