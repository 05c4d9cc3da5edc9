//! Run configuration: one TOML file, `${VAR}` interpolation from the
//! environment, command-line flags layered on top, and validation that
//! reports every violation at once.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use advneg_core::llm::{GenerationConfig, API_KEY_ENV};
use advneg_core::negatives::NegativeMethod;
use advneg_core::prompt::{ExampleFraction, InstructionType, MAX_EXAMPLES};
use advneg_core::ranker::TrainConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Demonstration source; defaults to `train`.
    pub examples: Option<PathBuf>,
    pub format: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            examples: None,
            format: "jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub instruction: InstructionType,
    pub k: usize,
    pub e_fraction: ExampleFraction,
    pub reuse: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            instruction: InstructionType::Direct,
            k: 2,
            e_fraction: ExampleFraction::Full,
            reuse: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSection {
    #[serde(flatten)]
    pub client: GenerationConfig,
    pub mock: bool,
    pub attempt_cap: u32,
    /// JSONL of canned completions; used instead of the synthetic mock when set.
    pub canned: Option<PathBuf>,
    pub endpoint: Option<String>,
    /// Never written to manifests.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for GenerationSection {
    fn default() -> Self {
        Self {
            client: GenerationConfig::default(),
            mock: false,
            attempt_cap: 5,
            canned: None,
            endpoint: None,
            api_key: None,
        }
    }
}

impl GenerationSection {
    /// Key from the config file, else from the environment.
    pub fn resolved_api_key(&self) -> Option<String> {
        self.api_key
            .clone()
            .or_else(|| std::env::var(API_KEY_ENV).ok())
            .filter(|k| !k.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NegativesConfig {
    pub method: NegativeMethod,
    pub n: usize,
    pub alpha: f64,
    /// `tfidf` or `file:<path>`.
    pub embeddings: String,
}

impl Default for NegativesConfig {
    fn default() -> Self {
        Self {
            method: NegativeMethod::Random,
            n: 5,
            alpha: 0.07,
            embeddings: "tfidf".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub bootstrap_resamples: usize,
    pub confidence: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bootstrap_resamples: 1000,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub prompt: PromptConfig,
    pub generation: GenerationSection,
    pub negatives: NegativesConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// `${VAR}` references that had no value; reported by `violations`.
    #[serde(skip)]
    pub unresolved: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            prompt: PromptConfig::default(),
            generation: GenerationSection::default(),
            negatives: NegativesConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            unresolved: Vec::new(),
        }
    }
}

/// Replace `${NAME}` in every string of a TOML tree. Unset names are left
/// empty and reported as `(dotted.path, NAME)`.
fn interpolate(value: &mut toml::Value, path: &str, lookup: &dyn Fn(&str) -> Option<String>, missing: &mut Vec<(String, String)>) {
    match value {
        toml::Value::String(s) => {
            let mut out = String::with_capacity(s.len());
            let mut rest = s.as_str();
            while let Some(start) = rest.find("${") {
                out.push_str(&rest[..start]);
                let after = &rest[start + 2..];
                let Some(end) = after.find('}') else {
                    out.push_str(&rest[start..]);
                    rest = "";
                    break;
                };
                let name = &after[..end];
                match lookup(name) {
                    Some(v) => out.push_str(&v),
                    None => missing.push((path.to_string(), name.to_string())),
                }
                rest = &after[end + 1..];
            }
            out.push_str(rest);
            *s = out;
        }
        toml::Value::Array(items) => {
            for (i, item) in items.iter_mut().enumerate() {
                interpolate(item, &format!("{path}[{i}]"), lookup, missing);
            }
        }
        toml::Value::Table(table) => {
            for (k, v) in table.iter_mut() {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                interpolate(v, &child, lookup, missing);
            }
        }
        _ => {}
    }
}

impl RunConfig {
    /// Parse TOML text, interpolating `${VAR}` with `lookup`.
    pub fn from_toml_str(
        text: &str,
        origin: &str,
        lookup: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let mut missing = Vec::new();
        interpolate(&mut value, "", lookup, &mut missing);
        let mut unresolved: Vec<String> = missing
            .iter()
            .filter(|(path, _)| path != "generation.api_key")
            .map(|(path, name)| format!("{path}: environment variable {name} is not set"))
            .collect();
        let mut config: RunConfig = value.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        if config.generation.api_key.as_deref() == Some("") {
            config.generation.api_key = None;
        }
        unresolved.sort();
        config.unresolved = unresolved;
        Ok(config)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text, &path.display().to_string(), &|name| std::env::var(name).ok())
    }

    /// Every problem with this config. `needs_llm` adds the credential check
    /// for commands that issue completion requests.
    pub fn violations(&self, needs_llm: bool) -> Vec<String> {
        let mut v = self.unresolved.clone();
        v.extend(
            self.generation
                .client
                .violations()
                .into_iter()
                .map(|m| format!("generation: {m}")),
        );
        if self.generation.attempt_cap == 0 {
            v.push("generation: attempt_cap must be at least 1".into());
        }
        if needs_llm
            && !self.generation.mock
            && self.generation.canned.is_none()
            && self.generation.resolved_api_key().is_none()
        {
            v.push(format!(
                "generation: no API key (set {API_KEY_ENV} or generation.api_key, or run with --mock)"
            ));
        }
        if self.prompt.k > MAX_EXAMPLES {
            v.push(format!("prompt: k must be at most {MAX_EXAMPLES}, got {}", self.prompt.k));
        }
        if self.prompt.instruction == InstructionType::Implicit && self.prompt.k > 0 {
            v.push("prompt: I_imp is zero-shot; k must be 0".into());
        }
        if self.negatives.n == 0 {
            v.push("negatives: n must be at least 1".into());
        }
        if !(self.negatives.alpha > 0.0 && self.negatives.alpha < 1.0) {
            v.push(format!("negatives: alpha must lie in (0, 1), got {}", self.negatives.alpha));
        }
        if self.negatives.embeddings != "tfidf" && !self.negatives.embeddings.starts_with("file:") {
            v.push(format!(
                "negatives: embeddings must be \"tfidf\" or \"file:<path>\", got {:?}",
                self.negatives.embeddings
            ));
        }
        if let Err(e) = self.train.validate() {
            v.push(format!("train: {e}"));
        }
        if self.eval.bootstrap_resamples == 0 {
            v.push("eval: bootstrap_resamples must be at least 1".into());
        }
        if !(self.eval.confidence > 0.0 && self.eval.confidence < 1.0) {
            v.push(format!("eval: confidence must lie in (0, 1), got {}", self.eval.confidence));
        }
        let formats: BTreeSet<&str> = ["jsonl", "jsonl_native", "dailydialogpp", "dailydialogpp_json", "personachat", "personachat_json"]
            .into_iter()
            .collect();
        if !formats.contains(self.data.format.as_str()) {
            v.push(format!("data: unknown format {:?}", self.data.format));
        }
        v
    }

    pub fn validate(&self, needs_llm: bool) -> Result<(), ConfigError> {
        let v = self.violations(needs_llm);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}
