use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Local,
    Remote,
}

/// A chat-completion-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub role: Role,
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token, if any.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first failure.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    1
}

pub const DEFAULT_CHUNK_SYSTEM_PROMPT: &str =
    "Answer or address the following part of a user's request as helpfully as you can.";

/// `{query}` is the full user text, `{responses}` the chunk outputs in order.
pub const DEFAULT_COMPOSITION_TEMPLATE: &str = "A user asked:\n{query}\n\nPartial answers, one per part of the request, in order:\n{responses}\n\nWrite one complete, coherent answer to the user.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub checkpoint: PathBuf,
    /// Detector rule file; the built-in rules when absent.
    #[serde(default)]
    pub detector_rules: Option<PathBuf>,
    pub local: EndpointConfig,
    pub remote: EndpointConfig,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_chunk_prompt")]
    pub chunk_system_prompt: String,
    #[serde(default = "default_composition")]
    pub composition_template: String,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_chunk_prompt() -> String {
    DEFAULT_CHUNK_SYSTEM_PROMPT.into()
}

fn default_composition() -> String {
    DEFAULT_COMPOSITION_TEMPLATE.into()
}

impl GatewayConfig {
    pub fn from_json(s: &str) -> Result<Self, GatewayError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| GatewayError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        for (want, ep) in [(Role::Local, &self.local), (Role::Remote, &self.remote)] {
            if ep.role != want {
                return Err(GatewayError::Config(format!("endpoint configured as {:?} is used as {want:?}", ep.role)));
            }
            if ep.timeout_ms == 0 {
                return Err(GatewayError::Config(format!("{want:?} endpoint timeout must be positive")));
            }
            if ep.base_url.trim().is_empty() {
                return Err(GatewayError::Config(format!("{want:?} endpoint base_url is empty")));
            }
        }
        Ok(())
    }
}
