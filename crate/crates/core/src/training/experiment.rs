use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, ppo_finetune, CurvePoint, Dataset, Method, TrainConfig, TrainError};
use crate::corpus::{generate_split, load_corpus, CorpusSplit, GenerationProfile};
use crate::env::SimWorld;
use crate::policy::{Agent, EmbeddingConfig, NetworkConfig};

/// Where an experiment's queries come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSource {
    /// A JSONL corpus written by `gen-corpus`.
    File { path: PathBuf },
    Generate {
        seed: u64,
        n: usize,
        #[serde(default = "default_test_ratio")]
        test_ratio: f64,
        #[serde(default)]
        profile: GenerationProfile,
    },
}

fn default_test_ratio() -> f64 {
    0.2
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Generate {
            seed: 7,
            n: 625,
            test_ratio: 0.2,
            profile: GenerationProfile::medical(),
        }
    }
}

impl CorpusSource {
    pub fn load(&self) -> Result<CorpusSplit, TrainError> {
        Ok(match self {
            CorpusSource::File { path } => load_corpus(path)?,
            CorpusSource::Generate { seed, n, test_ratio, profile } => generate_split(*seed, *n, *test_ratio, profile)?,
        })
    }
}

/// Everything one experiment run needs, read from a JSON file.
///
/// `world.lambda` / `world.penalty` must agree with `train.lambda` /
/// `train.penalty`; the training block is authoritative and the check
/// catches half-edited files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub world: SimWorld,
    pub train: TrainConfig,
    pub network: NetworkConfig,
    pub embedding: EmbeddingConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: CorpusSource::default(),
            world: SimWorld::default(),
            train: TrainConfig::default(),
            network: NetworkConfig::default(),
            embedding: EmbeddingConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, TrainError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| TrainError::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.train.validate()?;
        self.world.validate()?;
        if self.world.lambda != self.train.lambda || self.world.penalty != self.train.penalty {
            return Err(TrainError::Config(format!(
                "world (lambda {}, {:?}) disagrees with train (lambda {}, {:?})",
                self.world.lambda, self.world.penalty, self.train.lambda, self.train.penalty
            )));
        }
        Ok(())
    }

    pub fn new_agent(&self) -> Result<Agent, TrainError> {
        Ok(Agent::new(self.network.clone(), self.embedding.clone())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub quality_pct: f64,
    pub leakage_pct: f64,
    pub catastrophic_pct: f64,
    pub mean_reward: f64,
}

/// Trains one agent per λ from the same warm-started agent and seed, and
/// evaluates each greedily on `test` under its own λ. Rows come back sorted
/// by λ.
pub fn sweep_lambda(
    lambdas: &[f64],
    warm: &Agent,
    train: &Dataset,
    test: &Dataset,
    world: &SimWorld,
    cfg: &TrainConfig,
) -> Result<Vec<SweepRow>, TrainError> {
    if lambdas.len() < 2 {
        return Err(TrainError::Config("a sweep needs at least two lambda values".into()));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(TrainError::Config("lambda values must be finite and >= 0".into()));
    }
    let mut lambdas = lambdas.to_vec();
    lambdas.sort_by(f64::total_cmp);
    lambdas
        .par_iter()
        .map(|&lambda| {
            let w = world.with_lambda(lambda);
            let mut agent = warm.clone();
            ppo_finetune(&mut agent, train, &w, &cfg.ppo, cfg.seed)?;
            let r = evaluate(Method::Privacypad, test, &w, Some(&agent))?;
            Ok(SweepRow {
                lambda,
                quality_pct: r.quality_pct,
                leakage_pct: r.leakage_pct,
                catastrophic_pct: r.catastrophic_pct,
                mean_reward: r.mean_reward,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `step,mean_reward,mean_leak,quality`, one row per rollout iteration.
pub fn write_reward_curve(curve: &[CurvePoint], path: impl AsRef<Path>) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for p in curve {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reward_curve(path: impl AsRef<Path>) -> Result<Vec<CurvePoint>, TrainError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> TrainError {
    TrainError::Io(std::io::Error::other(e))
}
