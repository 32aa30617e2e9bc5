//! End-to-end acceptance checks, one line per criterion.
//!
//! `cargo test -p privpad-cli --test acceptance` runs everything (roughly
//! half an hour on one core). `ACCEPTANCE_ONLY=1,7` picks criteria.
//! A failing criterion prints FAIL with its numbers; set
//! `ACCEPTANCE_STRICT=1` to also make the process exit nonzero.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use privpad_core::corpus::{generate_split, CorpusSplit, GenerationProfile, PiiCategory, PiiUnit};
use privpad_core::env::{reward, Action, PenaltyMode, SimWorld};
use privpad_core::numerics::{grad_check, NumericsError, Tape, Tensor, Var};
use privpad_core::pii::{leakage, DetectorRuleSet, RemoteExposure};
use privpad_core::policy::{Agent, EmbeddingConfig, NetworkConfig, Variant};
use privpad_core::training::{
    collect_rollouts, evaluate, label_accuracy, oracle_report, ppo_finetune, ppo_loss, sft_loss, sft_warmup,
    sweep_lambda, Dataset, EvalReport, Method, PpoConfig, SftConfig, TrainConfig, TrainError,
};
use privpad_gateway::{EndpointConfig, Gateway, GatewayConfig, HttpTransport, Role};

// Shared training setup. Width 128 keeps the full suite around half an hour
// on a single core; see the README for why warm-up and PPO settings differ
// from the library defaults.
const EMBED_DIM: usize = 128;
const SEED: u64 = 7;

fn sft_cfg() -> SftConfig {
    SftConfig { epochs: 20, ..Default::default() }
}

fn ppo_cfg() -> PpoConfig {
    PpoConfig { lr: 1e-4, ..Default::default() }
}

fn agent(variant: Variant) -> Agent {
    let net = NetworkConfig { variant, seed: 1, ..Default::default() };
    Agent::new(net, EmbeddingConfig { dim: EMBED_DIM, ..Default::default() }).unwrap()
}

struct Split {
    train: Dataset,
    test: Dataset,
}

fn split(profile: &GenerationProfile, a: &Agent) -> (CorpusSplit, Split) {
    let s = generate_split(SEED, 625, 0.2, profile).unwrap();
    let d = Split { train: Dataset::new(&s.train, a).unwrap(), test: Dataset::new(&s.test, a).unwrap() };
    (s, d)
}

fn quadratic(lambda: f64) -> SimWorld {
    SimWorld::default().with_lambda(lambda)
}

fn linear(lambda: f64) -> SimWorld {
    SimWorld::default().with_lambda(lambda).with_penalty(PenaltyMode::Linear)
}

/// Warm-up plus PPO from a fresh agent.
fn train_agent(variant: Variant, data: &Split, world: &SimWorld) -> Agent {
    let mut a = agent(variant);
    sft_warmup(&mut a, &data.train, &sft_cfg(), SEED).unwrap();
    ppo_finetune(&mut a, &data.train, world, &ppo_cfg(), SEED).unwrap();
    a
}

fn summary(r: &EvalReport) -> String {
    format!(
        "q {:.1}% leak {:.2}% cat {:.1}% reward {:.3}",
        r.quality_pct, r.leakage_pct, r.catastrophic_pct, r.mean_reward
    )
}

/// Lazily built artifacts shared by several criteria.
#[derive(Default)]
struct Ctx {
    default_data: Option<Split>,
    sft: Option<(Agent, f64)>,
    ppo: Option<Agent>,
}

impl Ctx {
    fn data(&mut self) -> &Split {
        if self.default_data.is_none() {
            self.default_data = Some(split(&GenerationProfile::medical(), &agent(Variant::Transformer)).1);
        }
        self.default_data.as_ref().unwrap()
    }

    /// Warm-started agent on the default corpus and its training accuracy.
    fn sft(&mut self) -> (Agent, f64) {
        if self.sft.is_none() {
            let mut a = agent(Variant::Transformer);
            let r = sft_warmup(&mut a, &self.data().train, &sft_cfg(), SEED).unwrap();
            self.sft = Some((a, r.train_accuracy));
        }
        self.sft.clone().unwrap()
    }

    fn ppo(&mut self) -> Agent {
        if self.ppo.is_none() {
            let mut a = self.sft().0;
            ppo_finetune(&mut a, &self.data().train, &quadratic(5.0), &ppo_cfg(), SEED).unwrap();
            self.ppo = Some(a);
        }
        self.ppo.clone().unwrap()
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

// 1 ------------------------------------------------------------------------

/// Independent recount: collapse whitespace runs, lowercase, then a plain
/// window scan over chars.
fn recount(surfaces: &[&str], prompts: &[&str]) -> usize {
    fn canon(s: &str) -> Vec<char> {
        s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase().chars().collect()
    }
    let hay: Vec<Vec<char>> = prompts.iter().map(|p| canon(p)).collect();
    surfaces
        .iter()
        .filter(|s| {
            let n = canon(s);
            !n.is_empty() && hay.iter().any(|h| h.len() >= n.len() && h.windows(n.len()).any(|w| w == n.as_slice()))
        })
        .count()
}

#[rustfmt::skip]
const LEAK_CASES: [(&[&str], &[&str], usize); 50] = [
    (&["Ann Lee"], &["Ann Lee is ill"], 1),
    (&["Ann Lee"], &["ann lee is ill"], 1),
    (&["Ann Lee"], &["Ann  Lee is ill"], 1),
    (&["Ann Lee"], &["Ann\nLee"], 1),
    (&["Ann Lee"], &["Ann"], 0),
    (&["Ann Lee"], &[], 0),
    (&["Ann Lee"], &[""], 0),
    (&["Ann Lee", "Bob Roy"], &["Ann Lee"], 1),
    (&["Ann Lee", "Bob Roy"], &["Ann Lee", "Bob Roy"], 2),
    (&["Ann Lee", "Bob Roy"], &["Ann Lee and Bob Roy"], 2),
    (&["AB-12345"], &["MRN AB-12345."], 1),
    (&["AB-12345"], &["MRN AB-1234"], 0),
    (&["AB-12345"], &["ab-12345"], 1),
    (&["555-201-3344"], &["call 555-201-3344"], 1),
    (&["555-201-3344"], &["call 5552013344"], 0),
    (&["a@b.com"], &["mail A@B.COM now"], 1),
    (&["a@b.com"], &["mail a@b.co"], 0),
    (&["Springfield, IL"], &["in springfield, il"], 1),
    (&["Springfield, IL"], &["in Springfield IL"], 0),
    (&["12 Oak St"], &["12 Oak St, Springfield"], 1),
    (&["12 Oak St", "Springfield, IL"], &["12 Oak St, Springfield, IL"], 2),
    (&["March 3, 1960"], &["born March 3, 1960"], 1),
    (&["March 3, 1960"], &["born March 3 1960"], 0),
    (&["7:30 AM"], &["at 7:30 am"], 1),
    (&["UA 123"], &["flight UA 123"], 1),
    (&["UA 123"], &["flight UA123"], 0),
    (&["UA 123"], &["flight UA 1234"], 1),
    (&["Dr. Kim"], &["ask dr. kim"], 1),
    (&["Ann Lee", "AB-12345", "555-201-3344"], &["Ann Lee", "nothing"], 1),
    (&["Ann Lee", "AB-12345", "555-201-3344"], &["x AB-12345 y", "555-201-3344"], 2),
    (&["Ann Lee", "AB-12345", "555-201-3344"], &["Ann Lee AB-12345 555-201-3344"], 3),
    (&["Ann Lee", "AB-12345", "555-201-3344"], &["no identifiers here"], 0),
    (&["Ann Lee", "Bob Roy", "Cy Day", "Di Fox"], &["Ann Lee Bob Roy"], 2),
    (&["Ann Lee", "Bob Roy", "Cy Day", "Di Fox"], &["Cy Day", "Di Fox", "Ann Lee"], 3),
    (&["Ann Lee", "Bob Roy", "Cy Day", "Di Fox"], &["ANN LEE", "bob roy", "cy day", "di fox"], 4),
    (&["Ann Lee"], &["Ann Lee", "Ann Lee"], 1),
    (&[], &["anything"], 0),
    (&[], &[], 0),
    (&["Acme Corp"], &["works at acme corp."], 1),
    (&["Acme Corp"], &["works at acmecorp"], 0),
    (&["Blue Cross"], &["Blue\tCross covers"], 1),
    (&["Blue Cross"], &["Blue-Cross"], 0),
    (&["Mercy Hospital", "Dr. Kim"], &["Mercy Hospital"], 1),
    (&["Mercy Hospital", "Dr. Kim"], &["mercy hospital, dr. kim"], 2),
    (&["Ann Lee", "Bob Roy", "Cy Day", "Di Fox", "Ed Orr"], &["Ed Orr"], 1),
    (&["Ann Lee", "Bob Roy", "Cy Day", "Di Fox", "Ed Orr"], &["Ann Lee", "Bob Roy", "Cy Day", "Di Fox"], 4),
    (&["Ann Lee", "Bob Roy", "Cy Day", "Di Fox", "Ed Orr"], &["Ann Lee Bob Roy Cy Day Di Fox Ed Orr"], 5),
    (&["Ann Lee"], &["Lee, Ann"], 0),
    (&["ABC 1234"], &["plate abc 1234"], 1),
    (&["Ann Lee"], &["  ANN   LEE  "], 1),
];

fn metric_exactness() -> Verdict {
    let mut bad = Vec::new();
    let mut reward_err: f64 = 0.0;
    for (i, (surfaces, prompts, expected)) in LEAK_CASES.iter().enumerate() {
        let pii: Vec<PiiUnit> = surfaces
            .iter()
            .enumerate()
            .map(|(k, s)| PiiUnit {
                id: format!("p{k}"),
                surface: s.to_string(),
                category: PiiCategory::PersonName,
                task_critical: false,
                span: (0, 0),
            })
            .collect();
        let exposure = RemoteExposure::from_prompts(prompts.iter().map(|p| p.to_string()).collect(), &pii);
        let got = leakage(&pii, &exposure);
        let independent = recount(surfaces, prompts);
        let frac = if surfaces.is_empty() { 0.0 } else { independent as f64 / surfaces.len() as f64 };
        if got.leaked != *expected || independent != *expected || got.fraction != frac {
            bad.push(format!("case {i}: lib {} recount {independent} expected {expected}", got.leaked));
        }
        for lambda in [0.0, 1.0, 2.5, 5.0, 20.0] {
            for gain in [0.0, 1.0] {
                let r = reward(gain, got.fraction, lambda, PenaltyMode::Quadratic);
                reward_err = reward_err.max((r - (gain - lambda * got.fraction * got.fraction)).abs());
            }
        }
    }
    verdict(
        bad.is_empty() && reward_err <= 1e-12,
        format!("{} cases, {} mismatches {:?}, max reward error {reward_err:.1e}", LEAK_CASES.len(), bad.len(), bad),
    )
}

// 2 ------------------------------------------------------------------------

fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn away_from_zero(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    rand_t(rng, r, c).map(|x| if x >= 0.0 { 0.1 + 0.9 * x } else { -0.1 + 0.9 * x })
}

fn weighted(t: &mut Tape, x: Var, seed: u64) -> Result<Var, NumericsError> {
    let [r, c] = t.value(x).shape();
    let w = t.constant(rand_t(&mut ChaCha8Rng::seed_from_u64(seed), r, c));
    let p = t.mul(x, w)?;
    t.sum(p)
}

type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>>;

fn numerics_to_train(e: TrainError) -> NumericsError {
    match e {
        TrainError::Numerics(n) => n,
        other => panic!("{other}"),
    }
}

fn gradient_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_t(&mut rng, 3, 4);
    let b = rand_t(&mut rng, 4, 2);
    let c = rand_t(&mut rng, 3, 4);
    let row = rand_t(&mut rng, 1, 4);
    let away = away_from_zero(&mut rng, 3, 4);
    let away2 = away_from_zero(&mut rng, 3, 4);
    let (q, k, v) = (rand_t(&mut rng, 6, 4), rand_t(&mut rng, 6, 4), rand_t(&mut rng, 6, 3));
    let mask = rand_t(&mut rng, 6, 6).map(|x| if x > 0.5 { -1e9 } else { 0.0 });
    let w = |f: fn(&mut Tape, Var) -> Result<Var, NumericsError>| -> OpFn {
        Box::new(move |t, v| {
            let y = f(t, v[0])?;
            weighted(t, y, 9)
        })
    };
    let two = |f: fn(&mut Tape, Var, Var) -> Result<Var, NumericsError>| -> OpFn {
        Box::new(move |t, v| {
            let y = f(t, v[0], v[1])?;
            weighted(t, y, 9)
        })
    };
    let y01 = Tensor::row(&[0.0, 1.0, 1.0, 0.0]);
    let linear: Vec<(&str, OpFn, Vec<Tensor>)> = vec![
        ("matmul", two(|t, x, y| t.matmul(x, y)), vec![a.clone(), b.clone()]),
        ("add", two(|t, x, y| t.add(x, y)), vec![a.clone(), c.clone()]),
        ("sub", two(|t, x, y| t.sub(x, y)), vec![a.clone(), c.clone()]),
        ("add_row", two(|t, x, y| t.add_row(x, y)), vec![a.clone(), row.clone()]),
        ("scale", w(|t, x| t.scale(x, -2.5)), vec![a.clone()]),
        ("offset", w(|t, x| t.offset(x, 0.75)), vec![a.clone()]),
        ("transpose", w(|t, x| t.transpose(x)), vec![a.clone()]),
        ("sum", Box::new(|t: &mut Tape, v: &[Var]| t.sum(v[0])), vec![a.clone()]),
        ("mean", Box::new(|t: &mut Tape, v: &[Var]| t.mean(v[0])), vec![a.clone()]),
        ("row_sums", w(|t, x| t.row_sums(x)), vec![a.clone()]),
        ("slice_cols", w(|t, x| t.slice_cols(x, 1, 2)), vec![a.clone()]),
        ("concat_cols", two(|t, x, y| t.concat_cols(&[x, y])), vec![a.clone(), c.clone()]),
        ("pick", w(|t, x| t.pick(x, &[3, 0, 2])), vec![a.clone()]),
        ("embedding", w(|t, x| t.embedding(x, &[2, 0, 2, 1])), vec![a.clone()]),
    ];
    let nonlinear: Vec<(&str, OpFn, Vec<Tensor>)> = vec![
        ("mul", two(|t, x, y| t.mul(x, y)), vec![a.clone(), c.clone()]),
        ("mul_row", two(|t, x, y| t.mul_row(x, y)), vec![a.clone(), row.clone()]),
        ("softmax", w(|t, x| t.softmax(x)), vec![a.clone()]),
        ("log_softmax", w(|t, x| t.log_softmax(x)), vec![a.clone()]),
        ("layer_norm", w(|t, x| t.layer_norm(x)), vec![a.clone()]),
        ("relu", w(|t, x| t.relu(x)), vec![away.clone()]),
        ("gelu", w(|t, x| t.gelu(x)), vec![a.clone()]),
        ("exp", w(|t, x| t.exp(x)), vec![a.clone()]),
        ("ln", w(|t, x| t.ln(x)), vec![a.map(|x| x.abs() + 0.5)]),
        ("clip", w(|t, x| t.clip(x, -0.05, 0.05)), vec![away.clone()]),
        ("minimum", two(|t, x, y| t.minimum(x, y)), vec![away.clone(), away2.clone()]),
        ("cross_entropy", Box::new(|t: &mut Tape, v: &[Var]| t.cross_entropy(v[0], &[0, 3, 1])), vec![a.clone()]),
        ("bce", Box::new(move |t: &mut Tape, v: &[Var]| t.bce(v[0], &y01)), vec![Tensor::row(&[0.2, 0.7, 0.45, 0.9])]),
        (
            "attention",
            Box::new(move |t: &mut Tape, p: &[Var]| {
                let y = t.attention(p[0], p[1], p[2], Some(&mask))?;
                weighted(t, y, 4)
            }),
            vec![q.clone(), k.clone(), v.clone()],
        ),
        (
            "segment_attention",
            Box::new(|t: &mut Tape, p: &[Var]| {
                let y = t.segment_attention(p[0], p[1], p[2], &[2, 3, 1])?;
                weighted(t, y, 4)
            }),
            vec![q, k, v],
        ),
    ];
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut failed = Vec::new();
    for (tol, group) in [(1e-6, linear), (1e-4, nonlinear)] {
        for (name, f, params) in group {
            let r = grad_check(f, &params, 1e-5, tol).unwrap();
            worst.insert(name, r.max_rel_err);
            if !r.passed {
                failed.push(name.to_string());
            }
        }
    }

    // SFT objective, and the PPO objective in two parts: every parameter
    // without the value term, then the critic on the full loss. The critic
    // reads detached features, so the value term has no actor gradient.
    let net = NetworkConfig { heads: 2, layers: 1, ff_mult: 2, critic_hidden: 4, seed: 9, ..Default::default() };
    let mut small = Agent::new(net, EmbeddingConfig { dim: 8, ..Default::default() }).unwrap();
    let qs = generate_split(SEED, 2, 0.0, &GenerationProfile::medical()).unwrap().train;
    let data = Dataset::new(&qs, &small).unwrap();
    let params: Vec<Tensor> = small.actor.tensors().cloned().collect();
    let r = grad_check(
        |t, vars| {
            let actor = small.actor.with_vars(vars.to_vec())?;
            sft_loss(t, &small, &actor, &data, &[0, 1]).map_err(numerics_to_train)
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    worst.insert("sft_objective", r.max_rel_err);
    if !r.passed {
        failed.push("sft_objective".into());
    }
    let batch = collect_rollouts(&small, &data, &SimWorld::default(), &[(0, 1), (1, 2)], 1).unwrap();
    for t in small.actor.tensors_mut() {
        t.data_mut().iter_mut().enumerate().for_each(|(i, x)| *x += 0.01 * ((i % 5) as f64 - 2.0));
    }
    let na = small.actor.len();
    let no_value = PpoConfig { value_coef: 0.0, ..Default::default() };
    let params: Vec<Tensor> = small.actor.tensors().chain(small.critic.tensors()).cloned().collect();
    let r = grad_check(
        |t, vars| {
            let actor = small.actor.with_vars(vars[..na].to_vec())?;
            let critic = small.critic.with_vars(vars[na..].to_vec())?;
            Ok(ppo_loss(t, &small, &actor, &critic, &batch, &no_value).map_err(numerics_to_train)?.0)
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    worst.insert("ppo_policy_entropy", r.max_rel_err);
    if !r.passed {
        failed.push("ppo_policy_entropy".into());
    }
    let params: Vec<Tensor> = small.critic.tensors().cloned().collect();
    let full = PpoConfig::default();
    let r = grad_check(
        |t, vars| {
            let actor = small.actor.bind_frozen(t);
            let critic = small.critic.with_vars(vars.to_vec())?;
            Ok(ppo_loss(t, &small, &actor, &critic, &batch, &full).map_err(numerics_to_train)?.0)
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    worst.insert("ppo_full_critic", r.max_rel_err);
    if !r.passed {
        failed.push("ppo_full_critic".into());
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    verdict(
        failed.is_empty(),
        format!("{} checks, failed {failed:?}, largest rel err {max:.2e}", worst.len()),
    )
}

// 3 ------------------------------------------------------------------------

fn oracle_near_optimality(ctx: &mut Ctx) -> Verdict {
    let sft = ctx.sft().0;
    let ppo = ctx.ppo();
    let d = ctx.data();
    let w = quadratic(5.0);
    let oracle = oracle_report(&d.test, &w).unwrap();
    let p = evaluate(Method::Privacypad, &d.test, &w, Some(&ppo)).unwrap();
    let s = evaluate(Method::HeuristicSft, &d.test, &w, Some(&sft)).unwrap();
    let target = 0.9 * oracle.mean_reward;
    verdict(
        p.mean_reward >= target && p.mean_reward > s.mean_reward,
        format!(
            "ppo reward {:.3} vs target {target:.3} (oracle {:.3}); sft {:.3}; ppo {}",
            p.mean_reward,
            oracle.mean_reward,
            s.mean_reward,
            summary(&p)
        ),
    )
}

// 4 ------------------------------------------------------------------------

fn lambda_monotonicity(ctx: &mut Ctx) -> Verdict {
    let warm = ctx.sft().0;
    let d = ctx.data();
    let cfg = TrainConfig { ppo: ppo_cfg(), seed: SEED, ..Default::default() };
    let rows = sweep_lambda(&[1.0, 2.0, 5.0, 10.0, 20.0], &warm, &d.train, &d.test, &quadratic(5.0), &cfg).unwrap();
    let leaks: Vec<f64> = rows.iter().map(|r| r.leakage_pct).collect();
    let inversions: Vec<f64> = leaks.windows(2).map(|w| w[1] - w[0]).filter(|up| *up > 0.0).collect();
    let ok_inv = inversions.is_empty() || (inversions.len() == 1 && inversions[0] <= 1.0);
    let drop = leaks[0] - leaks[4];
    let table: Vec<String> = rows.iter().map(|r| format!("λ={} leak {:.2}% q {:.1}%", r.lambda, r.leakage_pct, r.quality_pct)).collect();
    verdict(ok_inv && drop >= 5.0, format!("{}; λ1-λ20 drop {drop:.2} pp", table.join(", ")))
}

// 5 ------------------------------------------------------------------------

fn quadratic_safety(ctx: &mut Ctx) -> Verdict {
    let shape = agent(Variant::Transformer);
    let (_, d) = split(&GenerationProfile::high_risk(), &shape);
    let wq = quadratic(5.0);
    let wl = linear(1.0);
    let aq = train_agent(Variant::Transformer, &d, &wq);
    let al = train_agent(Variant::Transformer, &d, &wl);
    let rq = evaluate(Method::Privacypad, &d.test, &wq, Some(&aq)).unwrap();
    let rl = evaluate(Method::LinearPenalty, &d.test, &wl, Some(&al)).unwrap();
    let oq = oracle_report(&d.test, &wq).unwrap();
    let ol = oracle_report(&d.test, &wl).unwrap();

    // Not part of the verdict: agents trained on the default corpus, then
    // run on the high-risk test queries.
    let mut lin = ctx.sft().0;
    ppo_finetune(&mut lin, &ctx.data().train, &wl, &ppo_cfg(), SEED).unwrap();
    let sq = evaluate(Method::Privacypad, &d.test, &wq, Some(&ctx.ppo())).unwrap();
    let sl = evaluate(Method::LinearPenalty, &d.test, &wl, Some(&lin)).unwrap();
    verdict(
        rq.catastrophic_pct < rl.catastrophic_pct,
        format!(
            "high-risk corpus: quadratic λ=5 {} | linear λ=1 {} | oracle cat {:.1}% vs {:.1}% | \
             trained on default corpus instead: cat {:.1}% vs {:.1}%",
            summary(&rq),
            summary(&rl),
            oq.catastrophic_pct,
            ol.catastrophic_pct,
            sq.catastrophic_pct,
            sl.catastrophic_pct
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn stateful_vs_stateless() -> Verdict {
    let shape = agent(Variant::Transformer);
    let (s, d) = split(&GenerationProfile::dependency_heavy(), &shape);
    let all: Vec<_> = s.train.iter().chain(&s.test).collect();
    let dep_share = all.iter().filter(|q| !q.sim.dependencies.is_empty()).count() as f64 / all.len() as f64;
    let w = quadratic(5.0);
    let t = train_agent(Variant::Transformer, &d, &w);
    let m = train_agent(Variant::Mlp, &d, &w);
    let rt = evaluate(Method::Privacypad, &d.test, &w, Some(&t)).unwrap();
    let rm = evaluate(Method::Stateless, &d.test, &w, Some(&m)).unwrap();
    let oracle = oracle_report(&d.test, &w).unwrap();
    verdict(
        dep_share >= 0.4 && rt.quality_pct >= rm.quality_pct + 5.0 && rt.leakage_pct <= rm.leakage_pct,
        format!(
            "{:.0}% of queries have dependencies; transformer {} | mlp {} | oracle {}",
            100.0 * dep_share,
            summary(&rt),
            summary(&rm),
            summary(&oracle)
        ),
    )
}

// 7 ------------------------------------------------------------------------

fn warm_up_fidelity(ctx: &mut Ctx) -> Verdict {
    let (sft, acc) = ctx.sft();
    let d = ctx.data();
    let test_acc = label_accuracy(&sft, &d.test).unwrap();
    let r = evaluate(Method::HeuristicSft, &d.test, &quadratic(5.0), Some(&sft)).unwrap();
    verdict(
        acc >= 0.95 && r.leakage_pct <= 5.0,
        format!("train label accuracy {acc:.4} (test {test_acc:.4}); sft test {}", summary(&r)),
    )
}

// 8 ------------------------------------------------------------------------

fn baseline_bounds(ctx: &mut Ctx) -> Verdict {
    let sft = ctx.sft().0;
    let ppo = ctx.ppo();
    let d = ctx.data();
    let wq = quadratic(5.0);
    let wl = linear(1.0);
    let local = evaluate(Method::AlwaysLocal, &d.test, &wq, None).unwrap();
    let remote = evaluate(Method::AlwaysRemote, &d.test, &wq, None).unwrap();
    let mut stateless = agent(Variant::Mlp);
    sft_warmup(&mut stateless, &d.train, &sft_cfg(), SEED).unwrap();
    ppo_finetune(&mut stateless, &d.train, &wq, &ppo_cfg(), SEED).unwrap();
    let mut lin = sft.clone();
    ppo_finetune(&mut lin, &d.train, &wl, &ppo_cfg(), SEED).unwrap();
    let learned = [
        evaluate(Method::HeuristicSft, &d.test, &wq, Some(&sft)).unwrap(),
        evaluate(Method::Privacypad, &d.test, &wq, Some(&ppo)).unwrap(),
        evaluate(Method::Stateless, &d.test, &wq, Some(&stateless)).unwrap(),
        evaluate(Method::LinearPenalty, &d.test, &wl, Some(&lin)).unwrap(),
    ];
    let between = learned.iter().all(|r| r.leakage_pct > 0.0 && r.leakage_pct < 100.0);
    let parts: Vec<String> = learned.iter().map(|r| format!("{} {:.2}%", r.method, r.leakage_pct)).collect();
    verdict(
        local.leakage_pct == 0.0 && remote.leakage_pct == 100.0 && between,
        format!(
            "always_local {:.1}%, always_remote {:.1}%; {}",
            local.leakage_pct,
            remote.leakage_pct,
            parts.join(", ")
        ),
    )
}

// 9 ------------------------------------------------------------------------

#[derive(Clone)]
struct Stub {
    bodies: Arc<Mutex<Vec<String>>>,
}

async fn stub_complete(State(s): State<Stub>, body: String) -> Json<serde_json::Value> {
    s.bodies.lock().unwrap().push(body);
    Json(serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": "ok" } }] }))
}

async fn stub() -> (String, Arc<Mutex<Vec<String>>>) {
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let router = Router::new()
        .route("/chat/completions", post(stub_complete))
        .with_state(Stub { bodies: bodies.clone() });
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    (format!("http://{addr}"), bodies)
}

fn gateway_isolation(ctx: &mut Ctx) -> Verdict {
    let sft = ctx.sft().0;
    let queries: Vec<_> = ctx.data().test.queries.iter().take(25).cloned().collect();
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async move {
        let (local_url, _) = stub().await;
        let (remote_url, remote_log) = stub().await;
        let ep = |role, base_url| EndpointConfig {
            role,
            base_url,
            model: "m".into(),
            auth_token_env: None,
            timeout_ms: 5_000,
            max_retries: 0,
        };
        let cfg = GatewayConfig {
            checkpoint: Default::default(),
            detector_rules: None,
            local: ep(Role::Local, local_url),
            remote: ep(Role::Remote, remote_url),
            listen: String::new(),
            chunk_system_prompt: "Help with this part.".into(),
            composition_template: "{query}\n{responses}".into(),
        };
        let gw = Gateway::new(sft, DetectorRuleSet::default_rules(), cfg, HttpTransport::new());
        let (mut violations, mut parity_bad, mut remote_calls, mut local_chunks) = (0, 0, 0, 0);
        for q in &queries {
            remote_log.lock().unwrap().clear();
            let r = gw.route(&q.query.text, false).await.unwrap();
            let bodies = remote_log.lock().unwrap().clone();
            remote_calls += bodies.len();
            for c in r.chunks.iter().filter(|c| c.action == Action::Local) {
                local_chunks += 1;
                let surfaces = q.query.pii.iter().filter(|u| privpad_core::pii::surface_in(&u.surface, &c.text));
                for u in surfaces {
                    if bodies.iter().any(|b| privpad_core::pii::surface_in(&u.surface, b)) {
                        violations += 1;
                    }
                }
            }
            let offline = leakage(&r.detected_pii, &RemoteExposure::from_prompts(bodies, &r.detected_pii));
            if offline != r.leakage {
                parity_bad += 1;
            }
        }
        verdict(
            violations == 0 && parity_bad == 0 && remote_calls > 0 && local_chunks > 0,
            format!(
                "{} queries, {remote_calls} remote calls, {local_chunks} local chunks, {violations} isolation violations, {parity_bad} parity mismatches",
                queries.len()
            ),
        )
    })
}

// 10 -----------------------------------------------------------------------

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let p = dir.path().join(name);
        let st = Command::new(env!("CARGO_BIN_EXE_privpad"))
            .args(["gen-corpus", "--seed", "7", "--n", "300", "--out", p.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(st.success());
        files.push(std::fs::read(p).unwrap());
    }
    let corpus_ok = files[0] == files[1] && !files[0].is_empty();

    let s = generate_split(SEED, 60, 0.2, &GenerationProfile::medical()).unwrap();
    let small = || {
        let net = NetworkConfig { seed: 2, ..Default::default() };
        Agent::new(net, EmbeddingConfig { dim: 32, ..Default::default() }).unwrap()
    };
    let w = SimWorld::default();
    let run = || {
        let mut a = small();
        let train = Dataset::new(&s.train, &a).unwrap();
        let test = Dataset::new(&s.test, &a).unwrap();
        sft_warmup(&mut a, &train, &SftConfig { epochs: 2, batch: 8, ..Default::default() }, 3).unwrap();
        let ckpt = serde_json::to_string(&privpad_core::policy::Checkpoint::from_agent(&a)).unwrap();
        let eval = serde_json::to_string(&evaluate(Method::HeuristicSft, &test, &w, Some(&a)).unwrap()).unwrap();
        let cfg = PpoConfig { lr: 1e-4, batch: 16, max_steps: 12, ..Default::default() };
        let curve = ppo_finetune(&mut a, &train, &w, &cfg, 5).unwrap().curve;
        (ckpt, eval, curve)
    };
    let (c1, e1, k1) = run();
    let (c2, e2, k2) = run();
    let curve_dev = k1
        .iter()
        .zip(&k2)
        .map(|(x, y)| (x.mean_reward - y.mean_reward).abs().max((x.mean_leak - y.mean_leak).abs()))
        .fold(0.0, f64::max);
    let ok = corpus_ok && c1 == c2 && e1 == e2 && k1.len() == k2.len() && curve_dev <= 1e-9;
    verdict(
        ok,
        format!(
            "corpus identical {corpus_ok}, sft checkpoint identical {}, eval identical {}, ppo curve max dev {curve_dev:.1e}",
            c1 == c2,
            e1 == e2
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut ctx = Ctx::default();

    type Check<'a> = Box<dyn FnMut(&mut Ctx) -> Verdict + 'a>;
    let criteria: Vec<(u32, &str, Duration, Check)> = vec![
        (1, "metric exactness", Duration::from_secs(1), Box::new(|_| metric_exactness())),
        (2, "gradient correctness", Duration::from_secs(120), Box::new(|_| gradient_correctness())),
        (3, "oracle near-optimality", Duration::from_secs(1800), Box::new(oracle_near_optimality)),
        (4, "lambda monotonicity", Duration::from_secs(3 * 3600), Box::new(lambda_monotonicity)),
        (5, "quadratic-penalty safety", Duration::from_secs(3600), Box::new(quadratic_safety)),
        (6, "stateful vs stateless", Duration::from_secs(3600), Box::new(|_| stateful_vs_stateless())),
        (7, "warm-up fidelity", Duration::from_secs(600), Box::new(warm_up_fidelity)),
        (8, "baseline bounds", Duration::from_secs(1800), Box::new(baseline_bounds)),
        (9, "gateway isolation", Duration::from_secs(60), Box::new(gateway_isolation)),
        (10, "determinism", Duration::from_secs(600), Box::new(|_| determinism())),
    ];

    let mut failures = 0;
    for (id, name, budget, mut check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| check(&mut ctx)))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                verdict(false, format!("panicked: {msg}"))
            });
        let took = t.elapsed();
        // shared artifacts are built by whichever criterion runs first, so
        // the budget is reported but not enforced
        let over = if took > budget { format!(" (over the {}s budget)", budget.as_secs()) } else { String::new() };
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s{over}]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64()
        );
        failures += usize::from(!v.pass);
    }
    println!("acceptance: {failures} failing");
    if strict && failures > 0 {
        std::process::exit(1);
    }
}
