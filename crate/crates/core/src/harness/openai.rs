//! OpenAI-compatible chat-completions and embeddings client.

use std::time::Duration;

use reqwest::blocking::Client;
use serde::Deserialize;
use serde_json::json;

use super::backend::{BackendError, CallContext, ChatBackend, ChatRequest, EmbeddingBackend};

#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl OpenAiConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
        }
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

fn client(cfg: &OpenAiConfig) -> Result<Client, BackendError> {
    Client::builder()
        .timeout(cfg.timeout)
        .build()
        .map_err(|e| BackendError::Transport(e.to_string()))
}

fn post(
    client: &Client,
    cfg: &OpenAiConfig,
    path: &str,
    body: &serde_json::Value,
) -> Result<String, BackendError> {
    let mut req = client.post(cfg.endpoint(path)).json(body);
    if let Some(key) = &cfg.api_key {
        req = req.bearer_auth(key);
    }
    let resp = req
        .send()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = resp.status();
    let text = resp
        .text()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(BackendError::Status {
            code: status.as_u16(),
            body: text.chars().take(500).collect(),
        });
    }
    Ok(text)
}

pub struct OpenAiChat {
    cfg: OpenAiConfig,
    client: Client,
    /// Overrides the per-agent model id when set.
    model_override: Option<String>,
}

impl OpenAiChat {
    pub fn new(cfg: OpenAiConfig) -> Result<Self, BackendError> {
        Ok(Self {
            client: client(&cfg)?,
            cfg,
            model_override: None,
        })
    }

    pub fn with_model_override(mut self, model: Option<String>) -> Self {
        self.model_override = model;
        self
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

impl ChatBackend for OpenAiChat {
    fn complete(&self, _ctx: &CallContext<'_>, request: &ChatRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model_override.as_deref().unwrap_or(&request.model),
            "messages": request.messages,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        });
        let text = post(&self.client, &self.cfg, "chat/completions", &body)?;
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Protocol("response has no message content".into()))
    }
}

pub struct OpenAiEmbeddings {
    cfg: OpenAiConfig,
    client: Client,
    model: String,
    max_batch: usize,
}

impl OpenAiEmbeddings {
    pub fn new(cfg: OpenAiConfig, model: impl Into<String>, max_batch: usize) -> Result<Self, BackendError> {
        Ok(Self {
            client: client(&cfg)?,
            cfg,
            model: model.into(),
            max_batch: max_batch.max(1),
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl EmbeddingBackend for OpenAiEmbeddings {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let body = json!({ "model": self.model, "input": texts });
        let text = post(&self.client, &self.cfg, "embeddings", &body)?;
        let mut parsed: EmbeddingResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }
}
