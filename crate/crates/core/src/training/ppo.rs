use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, PpoConfig, TrainError};
use crate::env::SimWorld;
use crate::numerics::{Adam, Bound, Tape, Tensor, Var};
use crate::policy::{stack_rows, Agent, RoutingPlan};

/// `min(r * a, clip(r, 1 - eps, 1 + eps) * a)` for one step.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Shifts to mean 0 and scales to unit population variance. A batch with
/// (near) zero spread is only centred.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n == 0 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    adv.iter_mut().for_each(|a| *a -= mean);
    if n < 2 {
        return;
    }
    let var = adv.iter().map(|a| a * a).sum::<f64>() / n as f64;
    if var > 1e-24 {
        let sd = var.sqrt();
        adv.iter_mut().for_each(|a| *a /= sd);
    }
}

/// Trajectories from one rollout, flattened over chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub x: Tensor,
    pub lens: Vec<usize>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Episode reward R repeated for each chunk of the episode.
    pub returns: Vec<f64>,
    /// Normalized `R - V(s_t)`.
    pub advantages: Vec<f64>,
    pub episode_rewards: Vec<f64>,
    pub episode_leaks: Vec<f64>,
    pub episode_gains: Vec<f64>,
}

struct Episode {
    plan: RoutingPlan,
    reward: f64,
    leak: f64,
    gain: f64,
}

fn run_shard(
    agent: &Agent,
    data: &Dataset,
    world: &SimWorld,
    items: &[(usize, u64)],
) -> Result<Vec<Episode>, TrainError> {
    let xs: Vec<&Tensor> = items.iter().map(|&(i, _)| &data.inputs[i]).collect();
    let (lp, v) = agent.evaluate(&xs)?;
    let mut out = Vec::with_capacity(items.len());
    let mut start = 0;
    for &(i, seed) in items {
        let n = data.inputs[i].rows();
        let rows: Vec<usize> = (start..start + n).collect();
        let lp_i = select_rows(&lp, &rows);
        let v_i = select_rows(&v, &rows);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = RoutingPlan::from_log_probs(&lp_i, &v_i, Some(&mut rng));
        let q = &data.queries[i];
        let (gain, reward) = q.score(&plan.actions, world)?;
        out.push(Episode {
            leak: q.leak_fraction(&plan.actions),
            plan,
            reward,
            gain,
        });
        start += n;
    }
    Ok(out)
}

fn select_rows(t: &Tensor, rows: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(rows.len() * t.cols());
    for &r in rows {
        data.extend_from_slice(t.row_slice(r));
    }
    Tensor::new(rows.len(), t.cols(), data).expect("row selection keeps the width")
}

/// Samples one episode per `(query index, seed)` pair with the current
/// parameters. The result does not depend on `workers`.
pub fn collect_rollouts(
    agent: &Agent,
    data: &Dataset,
    world: &SimWorld,
    items: &[(usize, u64)],
    workers: usize,
) -> Result<RolloutBatch, TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let shard = items.len().div_ceil(workers.max(1));
    let episodes: Vec<Episode> = if workers <= 1 {
        run_shard(agent, data, world, items)?
    } else {
        items
            .par_chunks(shard)
            .map(|s| run_shard(agent, data, world, s))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect()
    };
    let xs: Vec<&Tensor> = items.iter().map(|&(i, _)| &data.inputs[i]).collect();
    let (x, lens) = stack_rows(&xs)?;
    let mut b = RolloutBatch {
        x,
        lens,
        actions: Vec::new(),
        old_log_probs: Vec::new(),
        values: Vec::new(),
        returns: Vec::new(),
        advantages: Vec::new(),
        episode_rewards: Vec::new(),
        episode_leaks: Vec::new(),
        episode_gains: Vec::new(),
    };
    for e in episodes {
        for t in 0..e.plan.actions.len() {
            b.actions.push(e.plan.actions[t].index());
            b.old_log_probs.push(e.plan.log_probs[t]);
            b.values.push(e.plan.values[t]);
            b.returns.push(e.reward);
            b.advantages.push(e.reward - e.plan.values[t]);
        }
        b.episode_rewards.push(e.reward);
        b.episode_leaks.push(e.leak);
        b.episode_gains.push(e.gain);
    }
    normalize_advantages(&mut b.advantages);
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Largest `|r_t - 1|`.
    pub ratio_dev: f64,
}

/// `-(L_clip - c1 * L_vf + c2 * S)`, each term averaged over chunks.
pub fn ppo_loss(
    tape: &mut Tape,
    agent: &Agent,
    actor: &Bound,
    critic: &Bound,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
) -> Result<(Var, LossStats), TrainError> {
    let n = batch.actions.len();
    let xv = tape.constant(batch.x.clone());
    let out = agent.forward_tape(tape, actor, Some(critic), xv, &batch.lens)?;
    let values = out.values.expect("critic bound");

    let new_lp = tape.pick(out.log_probs, &batch.actions)?;
    let old = tape.constant(Tensor::new(n, 1, batch.old_log_probs.clone())?);
    let diff = tape.sub(new_lp, old)?;
    let ratio = tape.exp(diff)?;
    let adv = tape.constant(Tensor::new(n, 1, batch.advantages.clone())?);
    let s1 = tape.mul(ratio, adv)?;
    let clipped = tape.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)?;
    let s2 = tape.mul(clipped, adv)?;
    let surr = tape.minimum(s1, s2)?;
    let surr = tape.mean(surr)?;

    let ret = tape.constant(Tensor::new(n, 1, batch.returns.clone())?);
    let err = tape.sub(values, ret)?;
    let sq = tape.mul(err, err)?;
    let vf = tape.mean(sq)?;

    let p = tape.exp(out.log_probs)?;
    let plogp = tape.mul(p, out.log_probs)?;
    let ent = tape.row_sums(plogp)?;
    let ent = tape.mean(ent)?;
    let ent = tape.scale(ent, -1.0)?;

    // loss = -surr + c1 * vf - c2 * ent
    let a = tape.scale(vf, cfg.value_coef)?;
    let b = tape.scale(ent, cfg.entropy_coef)?;
    let loss = tape.sub(a, surr)?;
    let loss = tape.sub(loss, b)?;

    let r = tape.value(ratio).data();
    let stats = LossStats {
        loss: tape.value(loss).item(),
        surrogate: tape.value(surr).item(),
        value_loss: tape.value(vf).item(),
        entropy: tape.value(ent).item(),
        ratio_min: r.iter().copied().fold(f64::INFINITY, f64::min),
        ratio_max: r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ratio_dev: r.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max),
    };
    Ok((loss, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// 1-based rollout iteration.
    pub step: usize,
    pub mean_reward: f64,
    pub mean_leak: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoReport {
    pub curve: Vec<CurvePoint>,
    pub rollout_iterations: usize,
    pub optimizer_steps: usize,
    /// Largest `|r_t - 1|` seen on the first pass over each fresh batch.
    pub max_first_pass_ratio_dev: f64,
    pub last_stats: LossStats,
}

/// Phase-2 PPO. Each of `cfg.max_steps` iterations samples `cfg.batch`
/// training queries, rolls them out with the current policy, then takes
/// `cfg.epochs_per_batch` full-batch optimizer steps on actor and critic.
pub fn ppo_finetune(
    agent: &mut Agent,
    data: &Dataset,
    world: &SimWorld,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<PpoReport, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    world.validate()?;
    let mut actor_opt = Adam::new(&agent.actor, cfg.lr).with_max_grad_norm(cfg.max_grad_norm);
    let mut critic_opt = Adam::new(&agent.critic, cfg.lr).with_max_grad_norm(cfg.max_grad_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::new();
    let mut report = PpoReport {
        curve: Vec::with_capacity(cfg.max_steps),
        rollout_iterations: 0,
        optimizer_steps: 0,
        max_first_pass_ratio_dev: 0.0,
        last_stats: LossStats::default(),
    };

    for step in 1..=cfg.max_steps {
        let mut items = Vec::with_capacity(cfg.batch);
        while items.len() < cfg.batch {
            if order.is_empty() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
            }
            let i = order.pop().expect("refilled above");
            items.push((i, rng.next_u64()));
        }
        let batch = collect_rollouts(agent, data, world, &items, cfg.rollout_workers)?;
        let n = batch.episode_rewards.len() as f64;
        report.curve.push(CurvePoint {
            step,
            mean_reward: batch.episode_rewards.iter().sum::<f64>() / n,
            mean_leak: batch.episode_leaks.iter().sum::<f64>() / n,
            quality: batch.episode_gains.iter().sum::<f64>() / n,
        });

        for pass in 0..cfg.epochs_per_batch {
            let mut tape = Tape::new();
            let actor = agent.actor.bind(&mut tape);
            let critic = agent.critic.bind(&mut tape);
            let (loss, stats) = ppo_loss(&mut tape, agent, &actor, &critic, &batch, cfg)?;
            if !stats.loss.is_finite() {
                return Err(TrainError::NonFinite {
                    step,
                    detail: format!(
                        "pass {pass}: loss {} (ratio min {:.4e}, max {:.4e}, surrogate {}, value {}, entropy {})",
                        stats.loss, stats.ratio_min, stats.ratio_max, stats.surrogate, stats.value_loss, stats.entropy
                    ),
                });
            }
            if pass == 0 {
                report.max_first_pass_ratio_dev = report.max_first_pass_ratio_dev.max(stats.ratio_dev);
            }
            let grads = tape.backward(loss)?;
            let ga = actor.collect(&grads);
            let gc = critic.collect(&grads);
            drop((actor, critic));
            actor_opt.step(&mut agent.actor, &ga);
            critic_opt.step(&mut agent.critic, &gc);
            report.optimizer_steps += 1;
            report.last_stats = stats;
        }
        report.rollout_iterations = step;
    }
    agent.rng_state = rng.next_u64();
    Ok(report)
}
