use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use privpad_bench::{longest, sample_queries};
use privpad_core::chunker::segment;
use privpad_core::env::{brute_force_best, Action, PreparedQuery, SimWorld};
use privpad_core::numerics::{Adam, Tape};
use privpad_core::pii::{leakage, DetectorRuleSet, RemoteExposure};
use privpad_core::policy::{Agent, EmbeddingConfig, NetworkConfig};
use privpad_core::training::{collect_rollouts, ppo_loss, Dataset, PpoConfig};

fn text_paths(c: &mut Criterion) {
    let qs = sample_queries(64);
    let q = longest(&qs);
    let rules = DetectorRuleSet::default_rules();
    c.bench_function("segment", |b| b.iter(|| segment(black_box(&q.query.text)).unwrap()));
    c.bench_function("detect", |b| b.iter(|| rules.detect_units(black_box(&q.query.text))));
    let prompts: Vec<String> = segment(&q.query.text).unwrap().into_iter().map(|c| c.text).collect();
    c.bench_function("leakage", |b| {
        b.iter(|| {
            let exposure = RemoteExposure::from_prompts(black_box(prompts.clone()), &q.query.pii);
            leakage(&q.query.pii, &exposure)
        })
    });
}

fn oracle(c: &mut Criterion) {
    let qs = sample_queries(64);
    let p = PreparedQuery::new(longest(&qs)).unwrap();
    let w = SimWorld::default();
    c.bench_function(&format!("brute_force_{}_chunks", p.len()), |b| {
        b.iter(|| brute_force_best(black_box(&p), &w).unwrap())
    });
    let plan = vec![Action::Remote; p.len()];
    c.bench_function("score_plan", |b| b.iter(|| p.score(black_box(&plan), &w).unwrap()));
}

fn policy(c: &mut Criterion) {
    let qs = sample_queries(64);
    let q = longest(&qs);
    let texts: Vec<String> = segment(&q.query.text).unwrap().into_iter().map(|c| c.text).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let agent = Agent::new(NetworkConfig::default(), EmbeddingConfig::default()).unwrap();
    c.bench_function("embed_d384", |b| b.iter(|| agent.embed(black_box(&refs)).unwrap()));
    let x = agent.embed(&refs).unwrap().vectors;
    c.bench_function("forward_d384", |b| b.iter(|| agent.evaluate(&[black_box(&x)]).unwrap()));

    let mut agent = Agent::new(NetworkConfig::default(), EmbeddingConfig { dim: 64, ..Default::default() }).unwrap();
    let data = Dataset::new(&qs, &agent).unwrap();
    let world = SimWorld::default();
    let cfg = PpoConfig::default();
    let items: Vec<(usize, u64)> = (0..cfg.batch).map(|i| (i % data.len(), i as u64)).collect();
    let mut actor_opt = Adam::new(&agent.actor, cfg.lr);
    let mut critic_opt = Adam::new(&agent.critic, cfg.lr);
    c.bench_function("ppo_iteration_d64_batch64", |b| {
        b.iter(|| {
            let batch = collect_rollouts(&agent, &data, &world, &items, 1).unwrap();
            let mut tape = Tape::new();
            let actor = agent.actor.bind(&mut tape);
            let critic = agent.critic.bind(&mut tape);
            let (loss, _) = ppo_loss(&mut tape, &agent, &actor, &critic, &batch, &cfg).unwrap();
            let grads = tape.backward(loss).unwrap();
            let (ga, gc) = (actor.collect(&grads), critic.collect(&grads));
            drop((actor, critic));
            actor_opt.step(&mut agent.actor, &ga);
            critic_opt.step(&mut agent.critic, &gc);
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = text_paths, oracle, policy
}
criterion_main!(benches);
