use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;

use super::mock::whitespace_tokens;
use super::{request_id, CompletionBackend, CompletionResult, GenerationConfig, LlmError};
use crate::prompt::RenderedPrompt;

pub const BASE_URL_ENV: &str = "OPENAI_BASE_URL";
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("undecodable response: {0}")]
    Decode(String),
}

impl TransportError {
    fn is_transient(&self) -> bool {
        match self {
            TransportError::Status(code) => *code == 429 || *code >= 500,
            TransportError::Timeout | TransportError::Connection(_) => true,
            TransportError::Decode(_) => false,
        }
    }
}

/// One JSON POST. Split out so the retry logic can be tested without a server.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> Result<Value, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> Result<Value, TransportError> {
        let mut response = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => TransportError::Timeout,
                ureq::Error::StatusCode(code) => TransportError::Status(code),
                other => TransportError::Connection(other.to_string()),
            })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError::Status(status));
        }
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| TransportError::Decode(e.to_string()))
    }
}

/// OpenAI-compatible `/completions` client with bounded exponential backoff.
pub struct HttpBackend {
    base_url: String,
    api_key: String,
    transport: Box<dyn Transport>,
    sleep: bool,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            transport,
            sleep: true,
        }
    }

    /// Reads the endpoint and credential from the environment. The key is held
    /// in memory only.
    pub fn from_env(config: &GenerationConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(LlmError::MissingApiKey(API_KEY_ENV))?;
        let base_url = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.into());
        let timeout = Duration::from_secs_f64(config.request_timeout_secs);
        Ok(Self::new(base_url, api_key, Box::new(UreqTransport::new(timeout))))
    }

    /// Skip the real backoff delays (tests).
    pub fn without_sleep(mut self) -> Self {
        self.sleep = false;
        self
    }

    fn request_body(prompt: &RenderedPrompt, config: &GenerationConfig) -> Value {
        json!({
            "model": config.model_name,
            "prompt": prompt.text,
            "max_tokens": config.max_tokens,
            "temperature": config.temperature,
            "frequency_penalty": config.frequency_penalty,
            "presence_penalty": config.presence_penalty,
        })
    }
}

impl CompletionBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        config: &GenerationConfig,
        seed: u64,
    ) -> Result<CompletionResult, LlmError> {
        let request_id = request_id(prompt, seed);
        let url = format!("{}/completions", self.base_url);
        let body = Self::request_body(prompt, config);
        let attempts = config.max_retries.max(1);
        let started = Instant::now();
        let mut last = TransportError::Timeout;
        for attempt in 1..=attempts {
            match self.transport.post_json(&url, &self.api_key, &body) {
                Ok(value) => {
                    let latency_secs = started.elapsed().as_secs_f64();
                    return parse_response(&value, &request_id, prompt, config, latency_secs);
                }
                Err(TransportError::Status(code @ (401 | 403))) => {
                    return Err(LlmError::Auth {
                        request_id,
                        message: format!("HTTP status {code}"),
                    });
                }
                Err(e) if e.is_transient() => {
                    log::warn!("request {request_id}: attempt {attempt}/{attempts} failed: {e}");
                    last = e;
                    if attempt < attempts && self.sleep {
                        let delay = config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
                Err(e) => {
                    return Err(LlmError::Protocol {
                        request_id,
                        message: e.to_string(),
                    });
                }
            }
        }
        Err(match last {
            TransportError::Timeout => LlmError::Timeout { request_id, attempts },
            other => LlmError::Transport {
                request_id,
                attempts,
                message: other.to_string(),
            },
        })
    }
}

fn parse_response(
    value: &Value,
    request_id: &str,
    prompt: &RenderedPrompt,
    config: &GenerationConfig,
    latency_secs: f64,
) -> Result<CompletionResult, LlmError> {
    let text = value["choices"][0]["text"]
        .as_str()
        .ok_or_else(|| LlmError::Protocol {
            request_id: request_id.to_string(),
            message: "response has no choices[0].text".into(),
        })?
        .to_string();
    let usage = &value["usage"];
    let (prompt_tokens, completion_tokens, usage_estimated) =
        match (usage["prompt_tokens"].as_u64(), usage["completion_tokens"].as_u64()) {
            (Some(p), Some(c)) => (p, c, false),
            _ => (whitespace_tokens(&prompt.text), whitespace_tokens(&text), true),
        };
    Ok(CompletionResult {
        request_id: request_id.to_string(),
        text,
        prompt_tokens,
        completion_tokens,
        usage_estimated,
        latency_secs,
        estimated_cost: (prompt_tokens + completion_tokens) as f64 / 1000.0 * config.price_per_1k_tokens,
    })
}
