use std::future::Future;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::EndpointConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

/// Request body in the chat-completions wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Decode(String),
}

/// Sends one chat request and returns the reply text.
pub trait Transport: Send + Sync + 'static {
    fn complete(
        &self,
        endpoint: &EndpointConfig,
        request: ChatRequest,
    ) -> impl Future<Output = Result<String, TransportError>> + Send;
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// HTTP transport over reqwest, with per-endpoint timeout and retries.
#[derive(Debug, Clone, Default)]
pub struct HttpTransport {
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self::default()
    }

    async fn once(&self, ep: &EndpointConfig, req: &ChatRequest) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", ep.base_url.trim_end_matches('/'));
        let mut rb = self
            .client
            .post(url)
            .timeout(Duration::from_millis(ep.timeout_ms))
            .json(req);
        if let Some(var) = &ep.auth_token_env {
            if let Ok(token) = std::env::var(var) {
                rb = rb.bearer_auth(token);
            }
        }
        let resp = rb.send().await.map_err(|e| TransportError::Request(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(TransportError::Status { status: status.as_u16(), body });
        }
        let parsed: ChatResponse = resp.json().await.map_err(|e| TransportError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportError::Decode("no choices".into()))
    }
}

impl Transport for HttpTransport {
    async fn complete(&self, endpoint: &EndpointConfig, request: ChatRequest) -> Result<String, TransportError> {
        let mut last = None;
        for _ in 0..=endpoint.max_retries {
            match self.once(endpoint, &request).await {
                Ok(s) => return Ok(s),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
