//! Few-shot prompt construction for adversarial negative generation.
//!
//! A prompt is a sequence of blocks, each opened by the separator line:
//!
//! ```text
//! ###
//! Dialogue context:
//! """
//! A: ...
//! B: ...
//! """
//! Create five irrelevant responses containing keywords of the given dialogue context:
//! 1. ...
//! ...
//! 5. ...
//! ```
//!
//! Demonstration blocks list their five human negatives; the final target
//! block stops at the stub `1.` so the model continues the enumeration.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, DialogueRecord, Speaker, NEGATIVES_PER_TYPE};
use crate::seed::{json_digest, rng_for};

pub const DEFAULT_SEPARATOR: &str = "###";
pub const DEFAULT_CONTEXT_DELIMITER: &str = "\"\"\"";
pub const DIRECT_INSTRUCTION: &str =
    "Create five irrelevant responses containing keywords of the given dialogue context:";
pub const MAX_EXAMPLES: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("the implicit instruction is zero-shot, got k={0}")]
    ImplicitWithExamples(usize),
    #[error("at most {MAX_EXAMPLES} examples are supported, got {0}")]
    TooManyExamples(usize),
    #[error("record {0} has an empty context")]
    EmptyContext(String),
    #[error("record {id} has {count} negatives, a demonstration needs exactly {NEGATIVES_PER_TYPE}")]
    ExampleNegatives { id: String, count: usize },
    #[error("record {0} has no positive response for the positive-aware instruction")]
    MissingPositive(String),
    #[error("requested {requested} examples but only {available} are eligible")]
    NotEnoughExamples { requested: usize, available: usize },
    #[error("example set already contains {0}")]
    DuplicateExample(String),
    #[error("example set does not accept generated examples")]
    ReuseDisabled,
}

/// Task instruction variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstructionType {
    /// Direct instruction; the template used for the main results.
    #[serde(rename = "I_dir", alias = "dir", alias = "pneg")]
    Direct,
    /// Direct instruction preceded by the gold response.
    #[serde(rename = "I_pos", alias = "pos")]
    WithPositive,
    /// Narrative instruction with an open responder slot; zero-shot only.
    #[serde(rename = "I_imp", alias = "imp")]
    Implicit,
}

impl InstructionType {
    pub const ALL: [InstructionType; 3] = [Self::Direct, Self::WithPositive, Self::Implicit];

    /// True when the completion is expected to be a numbered list of five.
    pub fn is_enumerated(self) -> bool {
        !matches!(self, Self::Implicit)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Self::Direct => "dir",
            Self::WithPositive => "pos",
            Self::Implicit => "imp",
        }
    }

    pub fn implicit_text(responder: Speaker) -> String {
        format!(
            "Suddenly, {responder} makes an awkward response. The response appears to be okay \
             at first glance, but it's irrelevant to the conversation."
        )
    }
}

impl fmt::Display for InstructionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "I_{}", self.short_name())
    }
}

impl FromStr for InstructionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim_start_matches("I_") {
            // "pneg" names the same template as "dir".
            "dir" | "direct" | "pneg" => Ok(Self::Direct),
            "pos" | "positive" => Ok(Self::WithPositive),
            "imp" | "implicit" => Ok(Self::Implicit),
            other => Err(format!("unknown instruction type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub instruction: InstructionType,
    /// Demonstrations; each carries exactly five adversarial negatives.
    pub examples: Vec<DialogueRecord>,
    pub target: DialogueRecord,
    pub separator: String,
    pub context_delimiter: String,
}

impl PromptSpec {
    pub fn new(
        instruction: InstructionType,
        examples: Vec<DialogueRecord>,
        target: DialogueRecord,
    ) -> Self {
        Self {
            instruction,
            examples,
            target,
            separator: DEFAULT_SEPARATOR.to_owned(),
            context_delimiter: DEFAULT_CONTEXT_DELIMITER.to_owned(),
        }
    }

    pub fn k(&self) -> usize {
        self.examples.len()
    }

    pub fn hash(&self) -> String {
        json_digest(self)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let k = self.k();
        if self.instruction == InstructionType::Implicit && k > 0 {
            return Err(PromptError::ImplicitWithExamples(k));
        }
        if k > MAX_EXAMPLES {
            return Err(PromptError::TooManyExamples(k));
        }
        for record in self.examples.iter().chain(std::iter::once(&self.target)) {
            if record.context.is_empty() {
                return Err(PromptError::EmptyContext(record.id.clone()));
            }
            if self.instruction == InstructionType::WithPositive && record.positives.is_empty() {
                return Err(PromptError::MissingPositive(record.id.clone()));
            }
        }
        for ex in &self.examples {
            if ex.adversarial_negatives.len() != NEGATIVES_PER_TYPE {
                return Err(PromptError::ExampleNegatives {
                    id: ex.id.clone(),
                    count: ex.adversarial_negatives.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub target_id: String,
    pub spec_hash: String,
}

/// Collapse internal whitespace so every rendered line is single-line and trimmed.
pub(crate) fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn push_context(out: &mut String, spec: &PromptSpec, record: &DialogueRecord) {
    out.push_str(&spec.separator);
    out.push('\n');
    out.push_str("Dialogue context:\n");
    out.push_str(&spec.context_delimiter);
    out.push('\n');
    for u in &record.context {
        out.push_str(&format!("{}: {}\n", u.speaker, one_line(&u.text)));
    }
    out.push_str(&spec.context_delimiter);
    out.push('\n');
}

fn push_instruction(out: &mut String, spec: &PromptSpec, record: &DialogueRecord) {
    if spec.instruction == InstructionType::WithPositive {
        out.push_str(&format!(
            "Relevant response: {}\n",
            one_line(&record.positives[0])
        ));
    }
    out.push_str(DIRECT_INSTRUCTION);
    out.push('\n');
}

pub fn render_prompt(spec: &PromptSpec) -> Result<RenderedPrompt, PromptError> {
    spec.validate()?;
    let mut out = String::new();
    for ex in &spec.examples {
        push_context(&mut out, spec, ex);
        push_instruction(&mut out, spec, ex);
        for (i, neg) in ex.adversarial_negatives.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, one_line(neg)));
        }
    }
    push_context(&mut out, spec, &spec.target);
    match spec.instruction {
        InstructionType::Implicit => {
            let responder = spec
                .target
                .last_speaker()
                .map(Speaker::other)
                .unwrap_or(Speaker::B);
            out.push_str(&InstructionType::implicit_text(responder));
            out.push('\n');
            out.push_str(&format!("{responder}: "));
        }
        _ => {
            push_instruction(&mut out, spec, &spec.target);
            out.push_str("1.\n");
        }
    }
    Ok(RenderedPrompt {
        text: out,
        target_id: spec.target.id.clone(),
        spec_hash: spec.hash(),
    })
}

/// Share of the source training split used as the example set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExampleFraction {
    #[serde(rename = "0.1")]
    Tenth,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "10")]
    Ten,
    #[serde(rename = "100")]
    Full,
}

impl ExampleFraction {
    pub const ALL: [ExampleFraction; 4] = [Self::Tenth, Self::One, Self::Ten, Self::Full];

    pub fn percent(self) -> f64 {
        match self {
            Self::Tenth => 0.1,
            Self::One => 1.0,
            Self::Ten => 10.0,
            Self::Full => 100.0,
        }
    }

    /// Example-set size for a source of `total` demonstrations (rounded to nearest).
    pub fn size_of(self, total: usize) -> usize {
        (total as f64 * self.percent() / 100.0).round() as usize
    }
}

impl fmt::Display for ExampleFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.percent())
    }
}

impl FromStr for ExampleFraction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim_end_matches('%') {
            "0.1" => Ok(Self::Tenth),
            "1" => Ok(Self::One),
            "10" => Ok(Self::Ten),
            "100" => Ok(Self::Full),
            other => Err(format!("unsupported example fraction {other:?}")),
        }
    }
}

/// Demonstration pool for prompt construction.
#[derive(Debug, Clone)]
pub struct ExampleSet {
    records: Vec<DialogueRecord>,
    ids: HashSet<String>,
    pub fraction: Option<ExampleFraction>,
    pub reuse_enabled: bool,
}

impl ExampleSet {
    /// Records must carry at least five adversarial negatives; extras are dropped.
    pub fn new(records: Vec<DialogueRecord>, reuse_enabled: bool) -> Result<Self, PromptError> {
        let mut set = Self {
            records: Vec::with_capacity(records.len()),
            ids: HashSet::new(),
            fraction: None,
            reuse_enabled,
        };
        for mut r in records {
            if r.adversarial_negatives.len() < NEGATIVES_PER_TYPE {
                return Err(PromptError::ExampleNegatives {
                    id: r.id,
                    count: r.adversarial_negatives.len(),
                });
            }
            r.adversarial_negatives.truncate(NEGATIVES_PER_TYPE);
            set.push(r)?;
        }
        Ok(set)
    }

    /// Uniformly subsample the adversarial-bearing records of `corpus`.
    ///
    /// The size is `fraction` of the source, but never below `MAX_EXAMPLES + 1`
    /// (when the source allows) so that `k = 2` stays drawable after excluding a target.
    pub fn from_corpus(
        corpus: &Corpus,
        fraction: ExampleFraction,
        reuse_enabled: bool,
        seed: u64,
    ) -> Result<Self, PromptError> {
        let source: Vec<&DialogueRecord> = corpus.adversarial_bearing().collect();
        let size = fraction
            .size_of(source.len())
            .max(MAX_EXAMPLES + 1)
            .min(source.len());
        let mut rng = rng_for(seed, &format!("example-set/{fraction}"));
        let mut picks = index::sample(&mut rng, source.len(), size).into_vec();
        picks.sort_unstable();
        let mut set = Self::new(
            picks.into_iter().map(|i| source[i].clone()).collect(),
            reuse_enabled,
        )?;
        set.fraction = Some(fraction);
        Ok(set)
    }

    fn push(&mut self, record: DialogueRecord) -> Result<(), PromptError> {
        if !self.ids.insert(record.id.clone()) {
            return Err(PromptError::DuplicateExample(record.id));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[DialogueRecord] {
        &self.records
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }
}

/// Draw `k` distinct demonstrations uniformly without replacement, never the target itself.
pub fn select_examples(
    set: &ExampleSet,
    k: usize,
    exclude_id: Option<&str>,
    seed: u64,
) -> Result<Vec<DialogueRecord>, PromptError> {
    if k > MAX_EXAMPLES {
        return Err(PromptError::TooManyExamples(k));
    }
    let eligible: Vec<&DialogueRecord> = set
        .records
        .iter()
        .filter(|r| Some(r.id.as_str()) != exclude_id)
        .collect();
    if k > eligible.len() {
        return Err(PromptError::NotEnoughExamples {
            requested: k,
            available: eligible.len(),
        });
    }
    let mut rng = rng_for(seed, "select_examples");
    Ok(index::sample(&mut rng, eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i].clone())
        .collect())
}

/// Add a generated (context, negatives) pair to the example set.
pub fn reuse_append(
    set: &mut ExampleSet,
    target: &DialogueRecord,
    negatives: &[String],
) -> Result<(), PromptError> {
    if !set.reuse_enabled {
        return Err(PromptError::ReuseDisabled);
    }
    if negatives.len() != NEGATIVES_PER_TYPE {
        return Err(PromptError::ExampleNegatives {
            id: target.id.clone(),
            count: negatives.len(),
        });
    }
    let mut record = target.clone();
    record.adversarial_negatives = negatives.to_vec();
    if set.contains(&record.id) {
        // The target is itself a human demonstration; keep both.
        record.id = format!("{}#reuse", record.id);
    }
    set.push(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{alternating_context, Source};

    fn record(id: &str, turns: &[&str], positive: &str, negs: usize) -> DialogueRecord {
        DialogueRecord {
            id: id.into(),
            context: alternating_context(turns),
            persona: None,
            positives: vec![positive.into()],
            adversarial_negatives: (1..=negs).map(|i| format!("negative {i} of {id}")).collect(),
            source: Source::Synthetic,
        }
    }

    fn set(n: usize) -> ExampleSet {
        ExampleSet::new(
            (0..n)
                .map(|i| record(&format!("e{i}"), &["hello", "hi"], "ok", 5))
                .collect(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn zero_shot_has_one_block() {
        let target = record("t", &["Paul, a company called me.", "Great!"], "ok", 0);
        let p = render_prompt(&PromptSpec::new(InstructionType::Direct, vec![], target)).unwrap();
        assert_eq!(p.text.matches("###").count(), 1);
        assert_eq!(p.text.matches("Dialogue context:").count(), 1);
        assert!(p.text.starts_with("###\n"));
        assert!(p.text.ends_with(":\n1.\n"));
    }

    #[test]
    fn positive_line_precedes_instruction() {
        let target = record(
            "t",
            &["Paul, a company called me for an interview."],
            "You need to know something about the company.",
            0,
        );
        let p =
            render_prompt(&PromptSpec::new(InstructionType::WithPositive, vec![], target)).unwrap();
        let lines: Vec<&str> = p.text.lines().collect();
        let at = lines.iter().position(|l| *l == DIRECT_INSTRUCTION).unwrap();
        assert_eq!(
            lines[at - 1],
            "Relevant response: You need to know something about the company."
        );
    }

    #[test]
    fn implicit_addresses_the_other_speaker() {
        let target = record("t", &["hello", "hi there"], "ok", 0);
        let p = render_prompt(&PromptSpec::new(InstructionType::Implicit, vec![], target)).unwrap();
        assert!(p.text.ends_with("irrelevant to the conversation.\nA: "));
        assert!(p.text.contains("Suddenly, A makes an awkward response."));

        let target = record("t", &["hello"], "ok", 0);
        let ex = record("e", &["x"], "ok", 5);
        assert_eq!(
            render_prompt(&PromptSpec::new(InstructionType::Implicit, vec![ex], target)),
            Err(PromptError::ImplicitWithExamples(1))
        );
    }

    #[test]
    fn empty_context_and_bad_examples_rejected() {
        let mut target = record("t", &["hello"], "ok", 0);
        target.context.clear();
        assert_eq!(
            render_prompt(&PromptSpec::new(InstructionType::Direct, vec![], target)),
            Err(PromptError::EmptyContext("t".into()))
        );
        let target = record("t", &["hello"], "ok", 0);
        let ex = record("e", &["x"], "ok", 3);
        assert!(matches!(
            render_prompt(&PromptSpec::new(InstructionType::Direct, vec![ex], target)),
            Err(PromptError::ExampleNegatives { count: 3, .. })
        ));
    }

    #[test]
    fn no_trailing_whitespace_on_complete_lines() {
        let target = record("t", &["  hello   there ", "hi\nyou"], "ok", 0);
        let ex = record("e", &["x "], "ok", 5);
        let p = render_prompt(&PromptSpec::new(InstructionType::Direct, vec![ex], target)).unwrap();
        for line in p.text.lines() {
            assert_eq!(line, line.trim_end());
        }
        assert!(p.text.contains("A: hello there\nB: hi you\n"));
    }

    #[test]
    fn fraction_sizes() {
        let sizes: Vec<usize> = ExampleFraction::ALL.iter().map(|f| f.size_of(9259)).collect();
        assert_eq!(sizes, vec![9, 93, 926, 9259]);
    }

    #[test]
    fn select_excludes_target_and_bounds_k() {
        let s = set(3);
        for seed in 0..20 {
            let picks = select_examples(&s, 2, Some("e1"), seed).unwrap();
            assert_eq!(picks.len(), 2);
            assert!(picks.iter().all(|r| r.id != "e1"));
            assert_ne!(picks[0].id, picks[1].id);
        }
        assert!(select_examples(&s, 0, None, 0).unwrap().is_empty());
        assert!(matches!(
            select_examples(&set(1), 2, None, 0),
            Err(PromptError::NotEnoughExamples { requested: 2, available: 1 })
        ));
        assert_eq!(
            select_examples(&s, 3, None, 0),
            Err(PromptError::TooManyExamples(3))
        );
    }

    #[test]
    fn selection_is_uniform() {
        let s = set(10);
        let mut counts = std::collections::HashMap::new();
        for seed in 0..10_000u64 {
            let pick = select_examples(&s, 1, None, seed).unwrap();
            *counts.entry(pick[0].id.clone()).or_insert(0usize) += 1;
        }
        let sd = (10_000.0f64 * 0.1 * 0.9).sqrt();
        assert_eq!(counts.len(), 10);
        for c in counts.values() {
            assert!((*c as f64 - 1000.0).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn reuse_grows_the_set() {
        let mut s = set(9);
        let target = record("new", &["hello"], "ok", 0);
        let negs: Vec<String> = (0..5).map(|i| format!("gen {i}")).collect();
        reuse_append(&mut s, &target, &negs).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.contains("new"));
        // a target that is already a demonstration is kept alongside it
        reuse_append(&mut s, &target, &negs).unwrap();
        assert!(s.contains("new#reuse"));
        assert_eq!(
            reuse_append(&mut s, &target, &negs),
            Err(PromptError::DuplicateExample("new#reuse".into()))
        );
        // the appended record is drawable
        let found = (0..200).any(|seed| {
            select_examples(&s, 1, None, seed).unwrap()[0].id == "new"
        });
        assert!(found);
    }

    #[test]
    fn reuse_requires_flag_and_five() {
        let mut s = ExampleSet::new(vec![], false).unwrap();
        let target = record("new", &["hello"], "ok", 0);
        assert_eq!(
            reuse_append(&mut s, &target, &["a".into()]),
            Err(PromptError::ReuseDisabled)
        );
        s.reuse_enabled = true;
        assert!(matches!(
            reuse_append(&mut s, &target, &["a".into()]),
            Err(PromptError::ExampleNegatives { count: 1, .. })
        ));
    }

    #[test]
    fn instruction_aliases() {
        assert_eq!("I_pneg".parse::<InstructionType>(), Ok(InstructionType::Direct));
        assert_eq!("pos".parse::<InstructionType>(), Ok(InstructionType::WithPositive));
        assert_eq!(InstructionType::Implicit.to_string(), "I_imp");
    }
}
