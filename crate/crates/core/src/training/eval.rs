use std::fmt;

use serde::{Deserialize, Serialize};

use super::{heuristic_labels, Dataset, TrainError};
use crate::env::{brute_force_best, Action, SimWorld};
use crate::numerics::Tensor;
use crate::pii::CATASTROPHIC_THRESHOLD;
use crate::policy::{Agent, RoutingPlan, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AlwaysLocal,
    AlwaysRemote,
    HeuristicSft,
    Privacypad,
    Stateless,
    LinearPenalty,
    /// Brute-force optimum; a reference, not a deployable router.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::AlwaysLocal,
        Method::AlwaysRemote,
        Method::HeuristicSft,
        Method::Privacypad,
        Method::Stateless,
        Method::LinearPenalty,
        Method::Oracle,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Method::AlwaysLocal => "always_local",
            Method::AlwaysRemote => "always_remote",
            Method::HeuristicSft => "heuristic_sft",
            Method::Privacypad => "privacypad",
            Method::Stateless => "stateless",
            Method::LinearPenalty => "linear_penalty",
            Method::Oracle => "oracle",
        }
    }

    pub fn from_key(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.key() == s)
    }

    pub fn is_learned(self) -> bool {
        matches!(
            self,
            Method::HeuristicSft | Method::Privacypad | Method::Stateless | Method::LinearPenalty
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub id: String,
    pub actions: Vec<Action>,
    pub task_gain: f64,
    pub leak: f64,
    pub no_pii: bool,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub quality_pct: f64,
    /// Mean leak over queries that have PII.
    pub leakage_pct: f64,
    /// Share of PII-bearing queries leaking more than 80% of their PII.
    pub catastrophic_pct: f64,
    pub mean_reward: f64,
    pub lambda: f64,
    pub queries: Vec<QueryOutcome>,
}

fn plans_for(agent: &Agent, data: &Dataset) -> Result<Vec<Vec<Action>>, TrainError> {
    let mut out = Vec::with_capacity(data.len());
    for idx in (0..data.len()).collect::<Vec<_>>().chunks(64) {
        let xs: Vec<&Tensor> = idx.iter().map(|&i| &data.inputs[i]).collect();
        let (lp, v) = agent.evaluate(&xs)?;
        let mut start = 0;
        for &i in idx {
            let n = data.inputs[i].rows();
            let rows = |t: &Tensor| {
                let d: Vec<f64> = (start..start + n).flat_map(|r| t.row_slice(r).to_vec()).collect();
                Tensor::new(n, t.cols(), d).expect("row block")
            };
            out.push(RoutingPlan::from_log_probs(&rows(&lp), &rows(&v), None).actions);
            start += n;
        }
    }
    Ok(out)
}

fn report(method: Method, data: &Dataset, plans: Vec<Vec<Action>>, world: &SimWorld) -> Result<EvalReport, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut queries = Vec::with_capacity(data.len());
    for (q, actions) in data.queries.iter().zip(plans) {
        let (task_gain, reward) = q.score(&actions, world)?;
        queries.push(QueryOutcome {
            id: q.query.id.clone(),
            leak: q.leak_fraction(&actions),
            no_pii: q.query.pii.is_empty(),
            actions,
            task_gain,
            reward,
        });
    }
    let n = queries.len() as f64;
    let with_pii: Vec<&QueryOutcome> = queries.iter().filter(|q| !q.no_pii).collect();
    let m = with_pii.len().max(1) as f64;
    Ok(EvalReport {
        method,
        quality_pct: 100.0 * queries.iter().map(|q| q.task_gain).sum::<f64>() / n,
        leakage_pct: 100.0 * with_pii.iter().map(|q| q.leak).sum::<f64>() / m,
        catastrophic_pct: 100.0 * with_pii.iter().filter(|q| q.leak > CATASTROPHIC_THRESHOLD).count() as f64 / m,
        mean_reward: queries.iter().map(|q| q.reward).sum::<f64>() / n,
        lambda: world.lambda,
        queries,
    })
}

/// Greedy evaluation of `method` on `data`. Learned methods need `agent`,
/// and `data` must have been embedded with that agent's embedding config.
pub fn evaluate(method: Method, data: &Dataset, world: &SimWorld, agent: Option<&Agent>) -> Result<EvalReport, TrainError> {
    world.validate()?;
    let plans = match method {
        Method::AlwaysLocal => data.queries.iter().map(|q| vec![Action::Local; q.len()]).collect(),
        Method::AlwaysRemote => data.queries.iter().map(|q| vec![Action::Remote; q.len()]).collect(),
        Method::Oracle => return oracle_report(data, world),
        m => {
            let agent = agent.ok_or_else(|| TrainError::MissingCheckpoint(m.key().into()))?;
            let want = if m == Method::Stateless { Variant::Mlp } else { Variant::Transformer };
            if agent.variant() != want {
                return Err(TrainError::Config(format!(
                    "method `{}` needs a {want:?} agent, got {:?}",
                    m.key(),
                    agent.variant()
                )));
            }
            plans_for(agent, data)?
        }
    };
    report(method, data, plans, world)
}

/// Report for the brute-force optimal plan of every query.
pub fn oracle_report(data: &Dataset, world: &SimWorld) -> Result<EvalReport, TrainError> {
    let plans = data
        .queries
        .iter()
        .map(|q| brute_force_best(q, world).map(|b| b.actions))
        .collect::<Result<Vec<_>, _>>()?;
    report(Method::Oracle, data, plans, world)
}

/// Fraction of chunks where the greedy action equals the warm-up label.
pub fn label_accuracy(agent: &Agent, data: &Dataset) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let plans = plans_for(agent, data)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (q, plan) in data.queries.iter().zip(&plans) {
        for (a, y) in plan.iter().zip(heuristic_labels(q)) {
            hit += usize::from(a.index() == y);
            total += 1;
        }
    }
    Ok(hit as f64 / total as f64)
}
