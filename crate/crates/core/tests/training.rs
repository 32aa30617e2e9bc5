use privpad_core::corpus::{generate_corpus, generate_split, AnnotatedQuery, GenerationProfile, Query, QueryMeta, SimAnnotation};
use privpad_core::env::{Action, SimWorld};
use privpad_core::numerics::{grad_check, Tape, Tensor};
use privpad_core::policy::{Agent, EmbeddingConfig, NetworkConfig, Variant};
use privpad_core::training::*;

fn small_agent(variant: Variant, d: usize) -> Agent {
    let net = NetworkConfig { variant, heads: 2, seed: 3, ..Default::default() };
    Agent::new(net, EmbeddingConfig { dim: d, ..Default::default() }).unwrap()
}

fn data(n: usize, agent: &Agent) -> Dataset {
    Dataset::new(&generate_corpus(7, n, &GenerationProfile::medical()).unwrap(), agent).unwrap()
}

#[test]
fn clipped_surrogate_arithmetic() {
    assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
    assert_eq!(clipped_surrogate(1.0, -0.7, 0.2), -0.7);
    assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
    assert_eq!(clipped_surrogate(0.5, 1.0, 0.2), 0.5);
}

#[test]
fn advantages_normalize_to_zero_mean_unit_variance() {
    let mut a = vec![0.3, -1.2, 4.0, 0.0, 0.7, 2.2];
    normalize_advantages(&mut a);
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-6);
    let mut flat = vec![0.4; 5];
    normalize_advantages(&mut flat);
    assert!(flat.iter().all(|x| *x == 0.0));
}

#[test]
fn rollout_batch_invariants_and_fresh_ratios() {
    let agent = small_agent(Variant::Transformer, 16);
    let d = data(12, &agent);
    let items: Vec<(usize, u64)> = (0..12).map(|i| (i, 100 + i as u64)).collect();
    let b = collect_rollouts(&agent, &d, &SimWorld::default(), &items, 1).unwrap();
    assert_eq!(b.actions.len(), d.total_chunks());
    let n = b.advantages.len() as f64;
    let mean = b.advantages.iter().sum::<f64>() / n;
    let var = b.advantages.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-6);
    // before normalization: R - V(s_t)
    let raw: Vec<f64> = b.returns.iter().zip(&b.values).map(|(r, v)| r - v).collect();
    let m = raw.iter().sum::<f64>() / n;
    let sd = (raw.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    for (a, r) in b.advantages.iter().zip(&raw) {
        assert!((a - (r - m) / sd).abs() < 1e-9);
    }

    let mut tape = Tape::new();
    let actor = agent.actor.bind(&mut tape);
    let critic = agent.critic.bind(&mut tape);
    let (_, stats) = ppo_loss(&mut tape, &agent, &actor, &critic, &b, &PpoConfig::default()).unwrap();
    assert!(stats.ratio_dev < 1e-9, "{stats:?}");
}

#[test]
fn parallel_rollouts_match_serial() {
    let agent = small_agent(Variant::Transformer, 16);
    let d = data(10, &agent);
    let items: Vec<(usize, u64)> = (0..10).map(|i| (9 - i, 7 * i as u64)).collect();
    let w = SimWorld::default();
    let serial = collect_rollouts(&agent, &d, &w, &items, 1).unwrap();
    let par = collect_rollouts(&agent, &d, &w, &items, 3).unwrap();
    assert_eq!(serial.actions, par.actions);
    assert_eq!(serial.episode_rewards, par.episode_rewards);
    for (a, b) in serial.old_log_probs.iter().zip(&par.old_log_probs) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn unwrap_numerics(e: TrainError) -> privpad_core::numerics::NumericsError {
    match e {
        TrainError::Numerics(n) => n,
        other => panic!("{other}"),
    }
}

// The critic reads detached features, so the value loss sends no gradient
// into the actor by design. The objective is therefore checked as two
// pieces: every parameter without the value term, and the critic alone on
// the full loss.
#[test]
fn ppo_objective_gradients_match_finite_differences() {
    for variant in [Variant::Transformer, Variant::Mlp] {
        let net = NetworkConfig { variant, heads: 2, layers: 1, ff_mult: 2, critic_hidden: 4, seed: 9 };
        let mut agent = Agent::new(net, EmbeddingConfig { dim: 8, ..Default::default() }).unwrap();
        let d = data(2, &agent);
        let b = collect_rollouts(&agent, &d, &SimWorld::default(), &[(0, 1), (1, 2)], 1).unwrap();
        // move away from the collection point so ratios differ from 1
        for t in agent.actor.tensors_mut() {
            t.data_mut().iter_mut().enumerate().for_each(|(i, x)| *x += 0.01 * ((i % 5) as f64 - 2.0));
        }
        let na = agent.actor.len();

        let no_value = PpoConfig { value_coef: 0.0, ..Default::default() };
        let params: Vec<Tensor> = agent.actor.tensors().chain(agent.critic.tensors()).cloned().collect();
        let report = grad_check(
            |tape, vars| {
                let actor = agent.actor.with_vars(vars[..na].to_vec())?;
                let critic = agent.critic.with_vars(vars[na..].to_vec())?;
                Ok(ppo_loss(tape, &agent, &actor, &critic, &b, &no_value).map_err(unwrap_numerics)?.0)
            },
            &params,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{variant:?} policy+entropy: {report:?}");

        let full = PpoConfig::default();
        let params: Vec<Tensor> = agent.critic.tensors().cloned().collect();
        let report = grad_check(
            |tape, vars| {
                let actor = agent.actor.bind_frozen(tape);
                let critic = agent.critic.with_vars(vars.to_vec())?;
                Ok(ppo_loss(tape, &agent, &actor, &critic, &b, &full).map_err(unwrap_numerics)?.0)
            },
            &params,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{variant:?} critic: {report:?}");
    }
}

#[test]
fn sft_objective_gradients_match_finite_differences() {
    let net = NetworkConfig { heads: 2, layers: 1, ff_mult: 2, critic_hidden: 4, seed: 4, ..Default::default() };
    let agent = Agent::new(net, EmbeddingConfig { dim: 8, ..Default::default() }).unwrap();
    let d = data(2, &agent);
    let params: Vec<Tensor> = agent.actor.tensors().cloned().collect();
    let report = grad_check(
        |tape, vars| {
            let actor = agent.actor.with_vars(vars.to_vec())?;
            sft_loss(tape, &agent, &actor, &d, &[0, 1]).map_err(unwrap_numerics)
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

fn uniform_corpus(with_pii: bool) -> Vec<AnnotatedQuery> {
    let base = generate_corpus(11, 40, &GenerationProfile::medical()).unwrap();
    base.into_iter()
        .map(|mut q| {
            if !with_pii {
                // keep only PII-free sentences
                let chunks = privpad_core::chunker::attach_pii(
                    privpad_core::chunker::segment(&q.query.text).unwrap(),
                    &q.query.pii,
                )
                .unwrap();
                let kept: Vec<_> = chunks.iter().filter(|c| c.pii_ids.is_empty()).collect();
                q = AnnotatedQuery {
                    query: Query {
                        id: q.query.id.clone(),
                        text: kept.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" "),
                        pii: vec![],
                        domain_tag: "medical".into(),
                        meta: QueryMeta::default(),
                    },
                    sim: SimAnnotation { difficulty: vec![0.1; kept.len()], dependencies: vec![] },
                };
            }
            q
        })
        .collect()
}

#[test]
fn warm_up_follows_uniform_labels() {
    // every chunk PII-bearing
    let mut agent = small_agent(Variant::Transformer, 32);
    let all_pii: Vec<AnnotatedQuery> = uniform_corpus(true)
        .into_iter()
        .map(|mut q| {
            let chunks = privpad_core::chunker::attach_pii(
                privpad_core::chunker::segment(&q.query.text).unwrap(),
                &q.query.pii,
            )
            .unwrap();
            let kept: Vec<_> = chunks.iter().filter(|c| !c.pii_ids.is_empty()).collect();
            let mut text = String::new();
            let mut pii = Vec::new();
            for c in &kept {
                if !text.is_empty() {
                    text.push(' ');
                }
                let offset = text.chars().count();
                for id in &c.pii_ids {
                    let mut u = q.query.pii.iter().find(|u| &u.id == id).unwrap().clone();
                    u.span = (u.span.0 - c.span.0 + offset, u.span.1 - c.span.0 + offset);
                    pii.push(u);
                }
                text.push_str(&c.text);
            }
            q.query.text = text;
            q.query.pii = pii;
            q.sim = SimAnnotation { difficulty: vec![0.1; kept.len()], dependencies: vec![] };
            q
        })
        .collect();
    let d = Dataset::new(&all_pii, &agent).unwrap();
    let cfg = SftConfig { epochs: 10, batch: 8, ..Default::default() };
    sft_warmup(&mut agent, &d, &cfg, 1).unwrap();
    let plan = evaluate(Method::HeuristicSft, &d, &SimWorld::default(), Some(&agent)).unwrap();
    let local = plan.queries.iter().flat_map(|q| &q.actions).filter(|a| **a == Action::Local).count();
    assert!(local as f64 >= 0.95 * d.total_chunks() as f64);

    let mut agent = small_agent(Variant::Transformer, 32);
    let d = Dataset::new(&uniform_corpus(false), &agent).unwrap();
    sft_warmup(&mut agent, &d, &cfg, 1).unwrap();
    assert!(label_accuracy(&agent, &d).unwrap() >= 0.95);
}

#[test]
fn empty_corpus_is_an_error() {
    let mut agent = small_agent(Variant::Mlp, 8);
    let d = Dataset::new(&[], &agent).unwrap();
    assert!(matches!(sft_warmup(&mut agent, &d, &SftConfig::default(), 0), Err(TrainError::EmptyCorpus)));
    assert!(matches!(
        ppo_finetune(&mut agent, &d, &SimWorld::default(), &PpoConfig::default(), 0),
        Err(TrainError::EmptyCorpus)
    ));
}

#[test]
fn baselines_hit_their_bounds() {
    let agent = small_agent(Variant::Mlp, 8);
    let d = data(30, &agent);
    let w = SimWorld::default();
    assert_eq!(evaluate(Method::AlwaysLocal, &d, &w, None).unwrap().leakage_pct, 0.0);
    assert_eq!(evaluate(Method::AlwaysRemote, &d, &w, None).unwrap().leakage_pct, 100.0);
    assert!(matches!(
        evaluate(Method::Privacypad, &d, &w, None),
        Err(TrainError::MissingCheckpoint(m)) if m == "privacypad"
    ));
    let oracle = evaluate(Method::Oracle, &d, &w, None).unwrap();
    let local = evaluate(Method::AlwaysLocal, &d, &w, None).unwrap();
    assert!(oracle.mean_reward >= local.mean_reward);
}

#[test]
fn training_is_reproducible() {
    let split = generate_split(7, 40, 0.25, &GenerationProfile::medical()).unwrap();
    let run = || {
        let mut agent = small_agent(Variant::Transformer, 16);
        let train = Dataset::new(&split.train, &agent).unwrap();
        let sft = sft_warmup(&mut agent, &train, &SftConfig { epochs: 2, batch: 8, ..Default::default() }, 5).unwrap();
        let cfg = PpoConfig { batch: 8, max_steps: 5, lr: 1e-4, ..Default::default() };
        let ppo = ppo_finetune(&mut agent, &train, &SimWorld::default(), &cfg, 5).unwrap();
        (sft.losses, ppo.curve, agent.actor)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.2, b.2);
    for (x, y) in a.1.iter().zip(&b.1) {
        assert!((x.mean_reward - y.mean_reward).abs() < 1e-9);
    }
}

#[test]
fn ppo_counts_iterations_and_optimizer_steps() {
    let mut agent = small_agent(Variant::Mlp, 8);
    let d = data(6, &agent);
    let cfg = PpoConfig { batch: 4, max_steps: 3, epochs_per_batch: 2, ..Default::default() };
    let r = ppo_finetune(&mut agent, &d, &SimWorld::default(), &cfg, 1).unwrap();
    assert_eq!((r.rollout_iterations, r.optimizer_steps, r.curve.len()), (3, 6, 3));
    assert!(r.max_first_pass_ratio_dev < 1e-9);
}

#[test]
fn experiment_config_round_trip_and_checks() {
    let cfg = ExperimentConfig::default();
    let json = serde_json::to_string_pretty(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
    let mut bad = cfg.clone();
    bad.world.lambda = 2.0;
    let json = serde_json::to_string(&bad).unwrap();
    assert!(matches!(ExperimentConfig::from_json(&json), Err(TrainError::Config(_))));
    let err = ExperimentConfig::from_json(r#"{"train": {"ppo": {"clip_eps": "x"}}}"#).unwrap_err();
    assert!(err.to_string().contains("train.ppo.clip_eps"), "{err}");
}

#[test]
fn reward_curve_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("curve.csv");
    let curve = vec![
        CurvePoint { step: 1, mean_reward: -0.1234567890123, mean_leak: 0.5, quality: 0.25 },
        CurvePoint { step: 2, mean_reward: 1.0 / 3.0, mean_leak: 0.0, quality: 1.0 },
    ];
    write_reward_curve(&curve, &p).unwrap();
    assert_eq!(read_reward_curve(&p).unwrap(), curve);
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("step,mean_reward,mean_leak,quality\n"));
}
