//! Prompt → completion → parse → filter loop that yields five clean
//! adversarial negatives per target context.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DialogueRecord, NegativeEntry, NegativeTable, NEGATIVES_PER_TYPE};
use crate::llm::{CompletionResult, LlmClient, LlmError};
use crate::prompt::{
    render_prompt, reuse_append, select_examples, ExampleSet, InstructionType, PromptError,
    PromptSpec,
};
use crate::seed::derive_seed;
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("{target_id}: no clean completion in {} attempts", reports.len())]
    CapExhausted {
        target_id: String,
        reports: Vec<ErrorReport>,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("invalid generation settings: {0}")]
    InvalidSettings(String),
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponses {
    pub items: Vec<String>,
    pub raw: String,
    pub numbering_ok: bool,
}

/// `Some((n, rest))` when `line` starts with a `<digits>.` marker.
fn numbered_marker(line: &str) -> Option<(u32, &str)> {
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 3 {
        return None;
    }
    let rest = line[digits..].strip_prefix('.')?;
    if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
        return None;
    }
    Some((line[..digits].parse().ok()?, rest))
}

/// Parse a completion that continues a prompt ending in `1.`.
///
/// The stub `"1. "` is prepended, anything from a separator line onward is
/// dropped, and unnumbered lines are treated as continuations of the
/// current item.
pub fn parse_numbered_list(completion: &str) -> ParsedResponses {
    let full = format!("1. {completion}");
    let mut markers = Vec::new();
    let mut items: Vec<String> = Vec::new();
    for line in full.lines() {
        let line = line.trim();
        if line.starts_with("###") {
            break;
        }
        match numbered_marker(line) {
            Some((n, rest)) => {
                markers.push(n);
                items.push(rest.trim().to_string());
            }
            None if !line.is_empty() => {
                if let Some(last) = items.last_mut() {
                    if !last.is_empty() {
                        last.push(' ');
                    }
                    last.push_str(line);
                }
            }
            None => {}
        }
    }
    items.retain(|s| !s.is_empty());
    let expected: Vec<u32> = (1..=NEGATIVES_PER_TYPE as u32).collect();
    ParsedResponses {
        items,
        raw: completion.to_string(),
        numbering_ok: markers == expected,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResponseFlags {
    pub repetition: bool,
    pub underscore_junk: bool,
}

impl ResponseFlags {
    pub fn any(&self) -> bool {
        self.repetition || self.underscore_junk
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub responses: Vec<ResponseFlags>,
    pub numbering_violation: bool,
    pub clean: bool,
}

const CONSECUTIVE_REPEAT: usize = 4;
const TRIGRAM_REPEAT: usize = 3;

pub fn has_repetition(text: &str) -> bool {
    let tokens = tokenize(text);
    let mut run = 1;
    for w in tokens.windows(2) {
        run = if w[0] == w[1] { run + 1 } else { 1 };
        if run >= CONSECUTIVE_REPEAT {
            return true;
        }
    }
    let mut counts = std::collections::HashMap::new();
    for tri in tokens.windows(3) {
        let c = counts.entry(tri).or_insert(0usize);
        *c += 1;
        if *c >= TRIGRAM_REPEAT {
            return true;
        }
    }
    false
}

pub fn has_underscore_junk(text: &str) -> bool {
    text.contains("__") || text.contains("_ _")
}

pub fn detect_errors(parsed: &ParsedResponses) -> ErrorReport {
    let responses: Vec<ResponseFlags> = parsed
        .items
        .iter()
        .map(|r| ResponseFlags {
            repetition: has_repetition(r),
            underscore_junk: has_underscore_junk(r),
        })
        .collect();
    let numbering_violation = !parsed.numbering_ok || parsed.items.len() != NEGATIVES_PER_TYPE;
    let clean = !numbering_violation && !responses.iter().any(ResponseFlags::any);
    ErrorReport {
        responses,
        numbering_violation,
        clean,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub instruction: InstructionType,
    pub k: usize,
    pub attempt_cap: u32,
    pub seed: u64,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            instruction: InstructionType::Direct,
            k: 2,
            attempt_cap: 5,
            seed: 0,
        }
    }
}

impl GenerationSettings {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let mut problems = Vec::new();
        if self.attempt_cap < 1 {
            problems.push("attempt_cap must be at least 1".to_string());
        }
        if self.instruction == InstructionType::Implicit && self.k > 0 {
            problems.push(format!("{} takes no demonstrations (k = {})", self.instruction, self.k));
        }
        if self.k > crate::prompt::MAX_EXAMPLES {
            problems.push(format!("k = {} exceeds {}", self.k, crate::prompt::MAX_EXAMPLES));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GeneratorError::InvalidSettings(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub target_id: String,
    pub negatives: Vec<String>,
    pub attempts: u32,
    /// Spec hash of every prompt sent, across all attempts.
    pub prompts_used: Vec<String>,
    pub ledger: Vec<CompletionResult>,
    pub instruction: InstructionType,
    pub k: usize,
    /// Demonstrations of the successful attempt.
    pub example_ids: Vec<String>,
    pub demonstrations: Vec<Vec<String>>,
}

impl GenerationResult {
    pub fn to_entry(&self) -> NegativeEntry {
        NegativeEntry::new(&self.target_id, self.negatives.clone())
    }
}

fn parse_single(completions: &[String]) -> ParsedResponses {
    let items: Vec<String> = completions
        .iter()
        .filter_map(|c| c.lines().map(str::trim).find(|l| !l.is_empty()))
        .map(str::to_string)
        .collect();
    ParsedResponses {
        numbering_ok: items.len() == completions.len(),
        items,
        raw: completions.join("\n"),
    }
}

/// Generate negatives for one target. Under REUSE the clean result is appended
/// to `examples`.
pub fn generate_negatives(
    target: &DialogueRecord,
    examples: &mut ExampleSet,
    settings: &GenerationSettings,
    client: &LlmClient,
) -> Result<GenerationResult, GeneratorError> {
    let result = generate_one(target, examples, settings, client)?;
    if examples.reuse_enabled {
        reuse_append(examples, target, &result.negatives)?;
    }
    Ok(result)
}

fn generate_one(
    target: &DialogueRecord,
    examples: &ExampleSet,
    settings: &GenerationSettings,
    client: &LlmClient,
) -> Result<GenerationResult, GeneratorError> {
    settings.validate()?;
    let mut prompt_target = target.clone();
    prompt_target.adversarial_negatives.clear();
    let mut reports = Vec::new();
    let mut prompts_used = Vec::new();
    let mut ledger = Vec::new();

    for attempt in 1..=settings.attempt_cap {
        let attempt_seed = derive_seed(settings.seed, &format!("generate/{}/{attempt}", target.id));
        let demos = select_examples(examples, settings.k, Some(&target.id), attempt_seed)?;
        let spec = PromptSpec::new(settings.instruction, demos.clone(), prompt_target.clone());
        let prompt = render_prompt(&spec)?;
        prompts_used.push(prompt.spec_hash.clone());

        let parsed = if settings.instruction.is_enumerated() {
            let r = client.complete(&prompt, attempt_seed)?;
            let parsed = parse_numbered_list(&r.text);
            ledger.push(r);
            parsed
        } else {
            let mut texts = Vec::with_capacity(NEGATIVES_PER_TYPE);
            for i in 0..NEGATIVES_PER_TYPE {
                let r = client.complete(&prompt, derive_seed(attempt_seed, &format!("single/{i}")))?;
                texts.push(r.text.clone());
                ledger.push(r);
            }
            parse_single(&texts)
        };

        let report = detect_errors(&parsed);
        if report.clean {
            return Ok(GenerationResult {
                target_id: target.id.clone(),
                negatives: parsed.items,
                attempts: attempt,
                prompts_used,
                ledger,
                instruction: settings.instruction,
                k: settings.k,
                example_ids: demos.iter().map(|d| d.id.clone()).collect(),
                demonstrations: demos.into_iter().map(|d| d.adversarial_negatives).collect(),
            });
        }
        log::debug!("{}: attempt {attempt} rejected: {report:?}", target.id);
        reports.push(report);
    }
    Err(GeneratorError::CapExhausted {
        target_id: target.id.clone(),
        reports,
    })
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub results: Vec<GenerationResult>,
    /// Targets skipped after exhausting the attempt cap, with their error.
    pub skipped: Vec<(String, GeneratorError)>,
    /// |E| before each target was processed (REUSE bookkeeping).
    pub example_set_sizes: Vec<usize>,
}

impl BatchOutcome {
    pub fn table(&self, method: &str) -> NegativeTable {
        NegativeTable::from_entries(method, self.results.iter().map(GenerationResult::to_entry).collect())
    }
}

/// Generate for many targets. Without REUSE targets run concurrently up to the
/// client's in-flight limit; with REUSE they run in order so each append is
/// visible to later targets. Cap exhaustion skips a target; any other error
/// aborts the batch.
pub fn generate_batch(
    targets: &[DialogueRecord],
    examples: &mut ExampleSet,
    settings: &GenerationSettings,
    client: &LlmClient,
) -> Result<BatchOutcome, GeneratorError> {
    settings.validate()?;
    let mut outcome = BatchOutcome::default();
    let absorb = |outcome: &mut BatchOutcome, id: &str, r: Result<GenerationResult, GeneratorError>| {
        match r {
            Ok(g) => outcome.results.push(g),
            Err(e @ GeneratorError::CapExhausted { .. }) => {
                log::warn!("skipping {id}: {e}");
                outcome.skipped.push((id.to_string(), e));
            }
            Err(e) => return Err(e),
        }
        Ok(())
    };

    if examples.reuse_enabled {
        for t in targets {
            outcome.example_set_sizes.push(examples.len());
            let r = generate_negatives(t, examples, settings, client);
            absorb(&mut outcome, &t.id, r)?;
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(client.config().max_in_flight)
            .build()
            .map_err(|e| GeneratorError::ThreadPool(e.to_string()))?;
        let set: &ExampleSet = examples;
        let results: Vec<_> = pool.install(|| {
            targets
                .par_iter()
                .map(|t| generate_one(t, set, settings, client))
                .collect()
        });
        for (t, r) in targets.iter().zip(results) {
            outcome.example_set_sizes.push(set.len());
            absorb(&mut outcome, &t.id, r)?;
        }
    }
    Ok(outcome)
}
