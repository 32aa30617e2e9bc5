use std::time::Instant;

use futures::future::join_all;
use serde::{Deserialize, Serialize};

use privpad_core::chunker::{attach_pii, segment};
use privpad_core::corpus::PiiUnit;
use privpad_core::env::Action;
use privpad_core::pii::{leakage, DetectorRuleSet, Leakage, RemoteExposure};
use privpad_core::policy::{ActMode, Agent};

use crate::config::GatewayConfig;
use crate::transport::{ChatMessage, ChatRequest, Transport};
use crate::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelUsed {
    Local,
    Remote,
    /// Routed REMOTE, but the remote call failed and the local model answered.
    LocalFallback,
    /// Dry run: nothing was called.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkResult {
    pub index: usize,
    pub text: String,
    pub action: Action,
    pub model_used: ModelUsed,
    pub output: Option<String>,
    pub elapsed_ms: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub dry_run: bool,
    pub final_text: Option<String>,
    pub chunks: Vec<ChunkResult>,
    pub detected_pii: Vec<PiiUnit>,
    /// Leakage against the detected PII (no ground truth at serve time),
    /// from the remote request bodies actually sent.
    pub leakage: Leakage,
    /// Everything sent to the remote endpoint (serialized request bodies).
    pub remote_bodies: Vec<String>,
    pub warnings: Vec<String>,
    pub composition_ms: f64,
    pub total_ms: f64,
}

/// Applies a fixed policy to live text and dispatches chunks.
pub struct Gateway<T> {
    pub agent: Agent,
    pub detector: DetectorRuleSet,
    pub config: GatewayConfig,
    transport: T,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

impl<T: Transport> Gateway<T> {
    pub fn new(agent: Agent, detector: DetectorRuleSet, config: GatewayConfig, transport: T) -> Self {
        Gateway { agent, detector, config, transport }
    }

    /// Loads the checkpoint and detector rules named in `config`.
    pub fn from_config(config: GatewayConfig, transport: T) -> Result<Self, GatewayError> {
        config.validate()?;
        let agent = Agent::load(&config.checkpoint).map_err(|e| GatewayError::Config(format!("checkpoint: {e}")))?;
        let detector = match &config.detector_rules {
            Some(p) => DetectorRuleSet::load(p).map_err(|e| GatewayError::Config(format!("detector rules: {e}")))?,
            None => DetectorRuleSet::default_rules(),
        };
        Ok(Self::new(agent, detector, config, transport))
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn chunk_request(&self, model: &str, text: &str) -> ChatRequest {
        ChatRequest {
            model: model.to_string(),
            messages: vec![
                ChatMessage::system(self.config.chunk_system_prompt.clone()),
                ChatMessage::user(text.to_string()),
            ],
        }
    }

    pub async fn route(&self, text: &str, dry_run: bool) -> Result<RouteResult, GatewayError> {
        let start = Instant::now();
        let detected = self.detector.detect_units(text);
        let chunks = segment(text)
            .and_then(|c| attach_pii(c, &detected))
            .map_err(|e| GatewayError::Input(e.to_string()))?;
        if chunks.is_empty() {
            return Err(GatewayError::Input("text has no content to route".into()));
        }
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let plan = self
            .agent
            .route(&texts, ActMode::Greedy)
            .map_err(|e| GatewayError::Policy(e.to_string()))?;

        let mut results: Vec<ChunkResult> = chunks
            .iter()
            .zip(&plan.actions)
            .map(|(c, &action)| ChunkResult {
                index: c.index,
                text: c.text.clone(),
                action,
                model_used: ModelUsed::None,
                output: None,
                elapsed_ms: 0.0,
                warning: None,
            })
            .collect();

        if dry_run {
            let prompts = results
                .iter()
                .filter(|r| r.action == Action::Remote)
                .map(|r| r.text.clone())
                .collect();
            let exposure = RemoteExposure::from_prompts(prompts, &detected);
            return Ok(RouteResult {
                dry_run: true,
                final_text: None,
                chunks: results,
                leakage: leakage(&detected, &exposure),
                detected_pii: detected,
                remote_bodies: Vec::new(),
                warnings: Vec::new(),
                composition_ms: 0.0,
                total_ms: ms(start),
            });
        }

        // Only chunks the policy marked REMOTE ever reach the remote endpoint.
        let calls = results.iter().map(|r| self.dispatch(r));
        let outcomes = join_all(calls).await;

        let mut remote_bodies = Vec::new();
        let mut warnings = Vec::new();
        for (r, out) in results.iter_mut().zip(outcomes) {
            let out = out?;
            remote_bodies.extend(out.remote_body);
            if let Some(w) = &out.warning {
                warnings.push(format!("chunk {}: {w}", r.index));
            }
            r.model_used = out.model_used;
            r.output = Some(out.output);
            r.elapsed_ms = out.elapsed_ms;
            r.warning = out.warning;
        }

        let responses = results
            .iter()
            .map(|r| r.output.clone().unwrap_or_default())
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = self
            .config
            .composition_template
            .replace("{query}", text)
            .replace("{responses}", &responses);
        let t = Instant::now();
        let req = ChatRequest {
            model: self.config.local.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
        };
        let final_text = self
            .transport
            .complete(&self.config.local, req)
            .await
            .map_err(|e| GatewayError::LocalEndpoint(format!("composition: {e}")))?;
        let composition_ms = ms(t);

        let exposure = RemoteExposure::from_prompts(remote_bodies.clone(), &detected);
        Ok(RouteResult {
            dry_run: false,
            final_text: Some(final_text),
            chunks: results,
            leakage: leakage(&detected, &exposure),
            detected_pii: detected,
            remote_bodies,
            warnings,
            composition_ms,
            total_ms: ms(start),
        })
    }

    async fn dispatch(&self, r: &ChunkResult) -> Result<Dispatched, GatewayError> {
        let t = Instant::now();
        let local = &self.config.local;
        if r.action == Action::Local {
            let out = self
                .transport
                .complete(local, self.chunk_request(&local.model, &r.text))
                .await
                .map_err(|e| GatewayError::LocalEndpoint(format!("chunk {}: {e}", r.index)))?;
            return Ok(Dispatched { output: out, model_used: ModelUsed::Local, remote_body: None, warning: None, elapsed_ms: ms(t) });
        }
        let remote = &self.config.remote;
        let req = self.chunk_request(&remote.model, &r.text);
        let body = serde_json::to_string(&req).expect("request serializes");
        match self.transport.complete(remote, req).await {
            Ok(out) => Ok(Dispatched { output: out, model_used: ModelUsed::Remote, remote_body: Some(body), warning: None, elapsed_ms: ms(t) }),
            Err(e) => {
                let out = self
                    .transport
                    .complete(local, self.chunk_request(&local.model, &r.text))
                    .await
                    .map_err(|le| GatewayError::LocalEndpoint(format!("chunk {} fallback: {le}", r.index)))?;
                Ok(Dispatched {
                    output: out,
                    model_used: ModelUsed::LocalFallback,
                    // the body may have reached the remote side before it failed
                    remote_body: Some(body),
                    warning: Some(format!("remote endpoint failed ({e}); answered locally")),
                    elapsed_ms: ms(t),
                })
            }
        }
    }
}

struct Dispatched {
    output: String,
    model_used: ModelUsed,
    remote_body: Option<String>,
    warning: Option<String>,
    elapsed_ms: f64,
}
