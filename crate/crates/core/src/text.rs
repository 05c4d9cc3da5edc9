//! Text normalization shared by retrieval, features, and error filtering.
//!
//! One normalization is used everywhere: lowercase, drop punctuation, split
//! on whitespace. TF-IDF vectors are sparse and keyed by token string.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// Common English function words, excluded when extracting context keywords.
const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "been", "before", "being", "but", "by", "can", "could", "did", "do", "does", "doing", "dont",
    "down", "for", "from", "had", "has", "have", "having", "he", "her", "here", "hers", "him",
    "his", "how", "i", "id", "if", "ill", "im", "in", "into", "is", "isnt", "it", "its", "ive",
    "just", "me", "more", "most", "my", "no", "not", "now", "of", "off", "oh", "ok", "okay", "on",
    "once", "only", "or", "other", "our", "out", "over", "own", "really", "so", "some", "such",
    "than", "that", "thats", "the", "their", "them", "then", "there", "these", "they", "this",
    "those", "to", "too", "up", "very", "was", "we", "well", "were", "what", "when", "where",
    "which", "while", "who", "why", "will", "with", "would", "yeah", "yes", "you", "your",
    "youre", "yours",
];

/// Lowercase, strip punctuation, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Tokens that carry content: not a stopword and at least three characters.
pub fn content_words(text: &str) -> BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().count() >= 3 && !is_stopword(t))
        .collect()
}

pub fn bigrams(tokens: &[String]) -> BTreeSet<(String, String)> {
    tokens
        .windows(2)
        .map(|w| (w[0].clone(), w[1].clone()))
        .collect()
}

/// Sparse vector sorted by token.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector(pub Vec<(String, f64)>);

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|(_, v)| *v == 0.0)
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.0, &other.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Cosine similarity; zero vectors have similarity 0 with everything.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            (self.dot(other) / denom).clamp(-1.0, 1.0)
        }
    }
}

/// How tokens unseen at fit time are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Unseen tokens contribute nothing.
    Ignore,
    /// Unseen tokens get the weight of a term with document frequency zero.
    MaxIdf,
}

/// TF-IDF model with smoothed idf: `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfidfModel {
    doc_count: usize,
    doc_freq: BTreeMap<String, usize>,
    oov: OovPolicy,
}

impl TfidfModel {
    pub fn fit<'a, I>(docs: I, oov: OovPolicy) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut doc_freq = BTreeMap::new();
        let mut doc_count = 0;
        for doc in docs {
            doc_count += 1;
            for token in token_set(doc) {
                *doc_freq.entry(token).or_insert(0) += 1;
            }
        }
        Self {
            doc_count,
            doc_freq,
            oov,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn vocabulary_size(&self) -> usize {
        self.doc_freq.len()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        let n = self.doc_count as f64;
        match self.doc_freq.get(token) {
            Some(&df) => Some(((1.0 + n) / (1.0 + df as f64)).ln() + 1.0),
            None => match self.oov {
                OovPolicy::Ignore => None,
                OovPolicy::MaxIdf => Some((1.0 + n).ln() + 1.0),
            },
        }
    }

    /// Raw term counts weighted by idf. Not normalized; [`SparseVector::cosine`] normalizes.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for token in tokenize(text) {
            *counts.entry(token).or_insert(0) += 1;
        }
        let mut entries: Vec<(String, f64)> = counts
            .into_iter()
            .filter_map(|(tok, tf)| self.idf(&tok).map(|idf| (tok, tf as f64 * idf)))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        SparseVector(entries)
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        self.transform(a).cosine(&self.transform(b))
    }
}
