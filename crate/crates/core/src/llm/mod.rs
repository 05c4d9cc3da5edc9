//! Text-completion clients: an OpenAI-compatible HTTP backend, offline mock
//! backends, and token/cost/latency accounting.

mod http;
mod ledger;
mod mock;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{
    HttpBackend, Transport, TransportError, UreqTransport, API_KEY_ENV, BASE_URL_ENV, DEFAULT_BASE_URL,
};
pub use ledger::{estimate_cost, CostEstimate, LedgerSummary, UsageLedger};
pub use mock::{
    whitespace_tokens, CannedBackend, CannedCompletion, ScriptedBackend, SyntheticBackend,
    SIMULATED_SECS_PER_TOKEN,
};

use crate::prompt::RenderedPrompt;
use crate::seed::sha256_hex;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request {request_id}: authentication failed: {message}")]
    Auth { request_id: String, message: String },
    #[error("request {request_id}: timed out after {attempts} attempts")]
    Timeout { request_id: String, attempts: u32 },
    #[error("request {request_id}: transport failed after {attempts} attempts: {message}")]
    Transport {
        request_id: String,
        attempts: u32,
        message: String,
    },
    #[error("request {request_id}: {message}")]
    Protocol { request_id: String, message: String },
    #[error("no canned completion for prompt {0}")]
    MissingCanned(String),
    #[error("scripted backend ran out of completions")]
    ScriptExhausted,
    #[error("missing API key: set {0}")]
    MissingApiKey(&'static str),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model_name: String,
    pub temperature: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
    /// Total attempts per request, including the first.
    pub max_retries: u32,
    pub request_timeout_secs: f64,
    /// First retry delay; doubles on each further retry.
    pub backoff_base_ms: u64,
    /// Price used for per-request cost estimates.
    pub price_per_1k_tokens: f64,
    pub max_in_flight: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            model_name: "davinci".into(),
            temperature: 0.8,
            frequency_penalty: 0.4,
            presence_penalty: 0.4,
            max_tokens: 256,
            max_retries: 3,
            request_timeout_secs: 60.0,
            backoff_base_ms: 500,
            price_per_1k_tokens: 0.05,
            max_in_flight: 4,
        }
    }
}

impl GenerationConfig {
    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=2.0).contains(&self.temperature) {
            out.push(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(-2.0..=2.0).contains(&self.frequency_penalty) {
            out.push(format!(
                "frequency_penalty {} outside [-2, 2]",
                self.frequency_penalty
            ));
        }
        if !(-2.0..=2.0).contains(&self.presence_penalty) {
            out.push(format!(
                "presence_penalty {} outside [-2, 2]",
                self.presence_penalty
            ));
        }
        if self.max_retries < 1 {
            out.push("max_retries must be at least 1".into());
        }
        if self.max_tokens == 0 {
            out.push("max_tokens must be positive".into());
        }
        if !(self.request_timeout_secs > 0.0) {
            out.push("request_timeout_secs must be positive".into());
        }
        if self.max_in_flight == 0 {
            out.push("max_in_flight must be at least 1".into());
        }
        if self.model_name.trim().is_empty() {
            out.push("model_name is empty".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(LlmError::InvalidConfig(v.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub request_id: String,
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Token counts are whitespace estimates rather than provider-reported usage.
    pub usage_estimated: bool,
    pub latency_secs: f64,
    pub estimated_cost: f64,
}

impl CompletionResult {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Stable per-(prompt, seed) identifier used in logs and error messages.
pub(crate) fn request_id(prompt: &RenderedPrompt, seed: u64) -> String {
    let digest = sha256_hex(format!("{}:{seed}", prompt.spec_hash).as_bytes());
    format!("{}-{}", prompt.target_id, &digest[..12])
}

/// Something that turns a prompt into a completion.
///
/// `seed` varies repeated requests for the same prompt; mock backends are pure
/// functions of (prompt, seed) and remote backends ignore it.
pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        config: &GenerationConfig,
        seed: u64,
    ) -> Result<CompletionResult, LlmError>;
}

/// A backend plus the ledger every successful request is appended to.
pub struct LlmClient {
    backend: Box<dyn CompletionBackend>,
    config: GenerationConfig,
    ledger: Arc<Mutex<UsageLedger>>,
}

impl LlmClient {
    pub fn new(
        backend: Box<dyn CompletionBackend>,
        config: GenerationConfig,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(Self {
            backend,
            config,
            ledger: Arc::new(Mutex::new(UsageLedger::default())),
        })
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn complete(&self, prompt: &RenderedPrompt, seed: u64) -> Result<CompletionResult, LlmError> {
        let result = self.backend.complete(prompt, &self.config, seed)?;
        self.ledger
            .lock()
            .expect("ledger lock poisoned")
            .push(result.clone());
        Ok(result)
    }

    /// Copy of the ledger so far.
    pub fn ledger(&self) -> UsageLedger {
        self.ledger.lock().expect("ledger lock poisoned").clone()
    }
}
