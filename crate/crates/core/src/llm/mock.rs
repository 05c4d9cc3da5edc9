//! Offline backends. All of them are pure functions of (prompt, seed), and the
//! latency they report is simulated from token counts so that repeated runs
//! produce identical ledgers.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{request_id, CompletionBackend, CompletionResult, GenerationConfig, LlmError};
use crate::jsonl::{read_jsonl, JsonlError};
use crate::prompt::RenderedPrompt;
use crate::seed::{rng_for, sha256_hex};
use crate::text::content_words;

/// Seconds of simulated latency per completion token.
pub const SIMULATED_SECS_PER_TOKEN: f64 = 0.02;

pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

fn mock_result(
    prompt: &RenderedPrompt,
    config: &GenerationConfig,
    seed: u64,
    text: String,
    usage: Option<(u64, u64)>,
) -> CompletionResult {
    let (prompt_tokens, completion_tokens, usage_estimated) = match usage {
        Some((p, c)) => (p, c, false),
        None => (whitespace_tokens(&prompt.text), whitespace_tokens(&text), true),
    };
    CompletionResult {
        request_id: request_id(prompt, seed),
        text,
        prompt_tokens,
        completion_tokens,
        usage_estimated,
        latency_secs: completion_tokens as f64 * SIMULATED_SECS_PER_TOKEN,
        estimated_cost: (prompt_tokens + completion_tokens) as f64 / 1000.0
            * config.price_per_1k_tokens,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedCompletion {
    /// Prompt spec hash, or sha256 of the prompt text.
    pub key: String,
    pub text: String,
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
}

/// Fixture lookup keyed by prompt hash.
#[derive(Debug, Clone, Default)]
pub struct CannedBackend {
    table: BTreeMap<String, CannedCompletion>,
}

impl CannedBackend {
    pub fn new(entries: impl IntoIterator<Item = CannedCompletion>) -> Self {
        Self {
            table: entries.into_iter().map(|e| (e.key.clone(), e)).collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, JsonlError> {
        Ok(Self::new(read_jsonl::<CannedCompletion>(path)?))
    }
}

impl CompletionBackend for CannedBackend {
    fn name(&self) -> &str {
        "canned"
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        config: &GenerationConfig,
        seed: u64,
    ) -> Result<CompletionResult, LlmError> {
        let entry = self
            .table
            .get(&prompt.spec_hash)
            .or_else(|| self.table.get(&sha256_hex(prompt.text.as_bytes())))
            .ok_or_else(|| LlmError::MissingCanned(prompt.spec_hash.clone()))?;
        let usage = entry.prompt_tokens.zip(entry.completion_tokens);
        Ok(mock_result(prompt, config, seed, entry.text.clone(), usage))
    }
}

/// Returns the given completions in order, one per call, regardless of prompt.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(completions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(completions.into_iter().map(Into::into).collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("script lock poisoned").len()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        config: &GenerationConfig,
        seed: u64,
    ) -> Result<CompletionResult, LlmError> {
        let text = self
            .script
            .lock()
            .expect("script lock poisoned")
            .pop_front()
            .ok_or(LlmError::ScriptExhausted)?;
        Ok(mock_result(prompt, config, seed, text, None))
    }
}

const BRIDGES: &[&str] = &[
    "{s} It reminds me of the {kw}.",
    "The {kw} again? {s}",
    "{s} My cousin said the same about the {kw}.",
    "I once dreamed about a {kw}. {s}",
    "{s} Nobody cares about the {kw} on Sundays.",
    "Have you ever painted a {kw}? {s}",
    "{s} The {kw} was blue in my dream.",
];

const FALLBACK_SENTENCES: &[&str] = &[
    "I forgot where I parked the bicycle.",
    "The moon looked strange last night.",
    "My neighbor collects old stamps.",
    "Penguins cannot fly but they swim well.",
    "I prefer tea when it rains.",
];

/// Emits keyword-bearing but incoherent responses: content words of the
/// target context spliced into unrelated sentences from a response pool.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    pool: Vec<String>,
}

impl SyntheticBackend {
    pub fn new(pool: Vec<String>) -> Self {
        Self { pool }
    }

    fn lines(&self, context: &[String], count: usize, key: &str, seed: u64) -> Vec<String> {
        let mut rng = rng_for(seed, key);
        let joined = context.join(" ");
        let mut keywords: Vec<String> = content_words(&joined).into_iter().collect();
        if keywords.is_empty() {
            keywords = crate::text::tokenize(&joined);
        }
        if keywords.is_empty() {
            keywords.push("weather".into());
        }
        keywords.shuffle(&mut rng);

        let context_set: std::collections::HashSet<&str> =
            context.iter().map(String::as_str).collect();
        let pool: Vec<&str> = self
            .pool
            .iter()
            .map(String::as_str)
            .filter(|s| !context_set.contains(s) && !s.contains('_'))
            .collect();
        let source: &[&str] = if pool.len() >= count { &pool } else { FALLBACK_SENTENCES };
        let sentences: Vec<&str> = source.choose_multiple(&mut rng, count).copied().collect();

        (0..count)
            .map(|i| {
                let kw = &keywords[i % keywords.len()];
                let s = sentences[i % sentences.len()].trim();
                let bridge = BRIDGES.choose(&mut rng).expect("bridges non-empty");
                crate::prompt::one_line(&bridge.replace("{s}", s).replace("{kw}", kw))
            })
            .collect()
    }
}

/// The utterances of the last `Dialogue context:` block in a rendered prompt.
pub(crate) fn target_context(prompt: &str) -> Vec<String> {
    let Some(start) = prompt.rfind("Dialogue context:") else {
        return Vec::new();
    };
    let mut lines = prompt[start..].lines().skip(1);
    let Some(delimiter) = lines.next() else {
        return Vec::new();
    };
    lines
        .take_while(|l| *l != delimiter)
        .map(|l| {
            l.strip_prefix("A: ")
                .or_else(|| l.strip_prefix("B: "))
                .unwrap_or(l)
                .to_string()
        })
        .collect()
}

impl CompletionBackend for SyntheticBackend {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        config: &GenerationConfig,
        seed: u64,
    ) -> Result<CompletionResult, LlmError> {
        let context = target_context(&prompt.text);
        let key = format!("synthetic-backend/{}", sha256_hex(prompt.text.as_bytes()));
        let text = if prompt.text.ends_with("1.\n") {
            let lines = self.lines(&context, 5, &key, seed);
            let mut out = format!(" {}", lines[0]);
            for (i, line) in lines.iter().enumerate().skip(1) {
                out.push_str(&format!("\n{}. {line}", i + 1));
            }
            out.push('\n');
            out
        } else {
            self.lines(&context, 1, &key, seed).remove(0)
        };
        Ok(mock_result(prompt, config, seed, text, None))
    }
}
