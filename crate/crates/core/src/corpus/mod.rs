//! Dialogue corpora: record types, dataset loaders, and candidate-set assembly.

mod assemble;
mod load;
pub mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assemble::{
    assemble_test_instances, assemble_test_instances_with, assemble_training_instances,
    assemble_training_instances_with, make_personachat_adversarial, AdversarialSource,
    AssemblySeeds, CandidateInstance, CandidateLabel, NegativeEntry, NegativeTable, TestKind,
    NEGATIVES_PER_TYPE, TEST_WIDTH, TRAIN_WIDTH,
};
pub use load::{load_corpus, CorpusFormat};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("record {index}: {message}")]
    Parse { index: usize, message: String },
    #[error("empty corpus")]
    Empty,
    #[error("record {index} ({id}): {reason}")]
    InvalidRecord {
        index: usize,
        id: String,
        reason: String,
    },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("record {id}: needs {needed} negatives, {available} available")]
    InsufficientNegatives {
        id: String,
        needed: usize,
        available: usize,
    },
    #[error("negative count must be at least 1")]
    ZeroNegatives,
    #[error("record {0}: context has no utterance usable as an in-context negative")]
    NoInContextCandidate(String),
    #[error("adversarial source {0:?} requires a negative table")]
    MissingNegativeTable(AdversarialSource),
    #[error(transparent)]
    Sampling(#[from] crate::negatives::NegativesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    /// Speaker of the `turn`-th utterance (0-based) in an alternating context starting with A.
    pub fn for_turn(turn: usize) -> Self {
        if turn % 2 == 0 {
            Speaker::A
        } else {
            Speaker::B
        }
    }

    pub fn other(self) -> Self {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::A => "A",
            Speaker::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Self {
            speaker,
            text: text.into(),
        }
    }
}

/// Build an alternating A/B context from plain turn texts.
pub fn alternating_context<S: AsRef<str>>(turns: &[S]) -> Vec<Utterance> {
    turns
        .iter()
        .enumerate()
        .map(|(i, t)| Utterance::new(Speaker::for_turn(i), t.as_ref().trim()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[serde(rename = "dailydialogpp")]
    DailyDialogPP,
    PersonaChat,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub id: String,
    pub context: Vec<Utterance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Vec<String>>,
    pub positives: Vec<String>,
    #[serde(default)]
    pub adversarial_negatives: Vec<String>,
    pub source: Source,
}

impl DialogueRecord {
    /// Context utterances joined by single spaces.
    pub fn context_text(&self) -> String {
        self.context
            .iter()
            .map(|u| u.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Carries the full set of five human adversarial negatives.
    pub fn has_adversarial(&self) -> bool {
        self.adversarial_negatives.len() >= NEGATIVES_PER_TYPE
    }

    pub fn last_speaker(&self) -> Option<Speaker> {
        self.context.last().map(|u| u.speaker)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.context.is_empty() {
            return Err("context has no utterances".into());
        }
        for (i, u) in self.context.iter().enumerate() {
            if u.text.trim().is_empty() {
                return Err(format!("utterance {i} is empty"));
            }
            if i > 0 && self.context[i - 1].speaker == u.speaker {
                return Err(format!("utterance {i} does not alternate speakers"));
            }
        }
        if self.positives.is_empty() {
            return Err("no positive response".into());
        }
        if self.positives.iter().any(|p| p.trim().is_empty()) {
            return Err("empty positive response".into());
        }
        Ok(())
    }
}

/// Concatenate persona sentences in front of the first context turn.
///
/// The persona text is attributed to the first speaker; the persona field is cleared.
pub fn flatten_persona(record: &DialogueRecord) -> DialogueRecord {
    let persona = record.persona.as_deref().unwrap_or_default();
    if persona.is_empty() {
        return record.clone();
    }
    let mut out = record.clone();
    out.persona = None;
    let prefix = persona
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if let Some(first) = out.context.first_mut() {
        first.text = if prefix.is_empty() {
            first.text.clone()
        } else {
            format!("{prefix} {}", first.text)
        };
    }
    out
}

/// Deduplicated pool of every positive response in a corpus, in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct ResponsePool {
    texts: Vec<String>,
    index: HashMap<String, usize>,
}

impl ResponsePool {
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut pool = Self::default();
        for t in texts {
            pool.insert(t.into());
        }
        pool
    }

    fn insert(&mut self, text: String) {
        if !self.index.contains_key(&text) {
            self.index.insert(text.clone(), self.texts.len());
            self.texts.push(text);
        }
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        self.texts.get(i).map(String::as_str)
    }

    pub fn position(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    pub fn contains(&self, text: &str) -> bool {
        self.index.contains_key(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub split: Split,
    pub records: usize,
    pub adversarial_bearing: usize,
    pub pool_size: usize,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub split: Split,
    pub records: Vec<DialogueRecord>,
    pub response_pool: ResponsePool,
}

impl Corpus {
    /// Validate records and build the response pool.
    pub fn new(split: Split, records: Vec<DialogueRecord>) -> Result<Self, CorpusError> {
        if records.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut seen = HashSet::new();
        for (index, r) in records.iter().enumerate() {
            r.validate().map_err(|reason| CorpusError::InvalidRecord {
                index,
                id: r.id.clone(),
                reason,
            })?;
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        let response_pool = ResponsePool::from_texts(
            records
                .iter()
                .flat_map(|r| r.positives.iter().map(|p| p.trim().to_owned())),
        );
        let corpus = Self {
            split,
            records,
            response_pool,
        };
        let s = corpus.summary();
        log::info!(
            "loaded {:?} split: {} records, {} adversarial-bearing, pool of {}",
            s.split,
            s.records,
            s.adversarial_bearing,
            s.pool_size
        );
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DialogueRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn adversarial_bearing(&self) -> impl Iterator<Item = &DialogueRecord> {
        self.records.iter().filter(|r| r.has_adversarial())
    }

    pub fn summary(&self) -> CorpusSummary {
        CorpusSummary {
            split: self.split,
            records: self.records.len(),
            adversarial_bearing: self.adversarial_bearing().count(),
            pool_size: self.response_pool.len(),
        }
    }

    /// A corpus restricted to the records matching `keep`.
    pub fn filtered(&self, keep: impl Fn(&DialogueRecord) -> bool) -> Result<Self, CorpusError> {
        Self::new(
            self.split,
            self.records.iter().filter(|r| keep(r)).cloned().collect(),
        )
    }
}
