//! Pluggable sentence embeddings: native TF-IDF or precomputed vectors.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::NegativesError;
use crate::text::{OovPolicy, SparseVector, TfidfModel};

#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Sparse(SparseVector),
    Dense(Vec<f64>),
}

impl Embedding {
    pub fn cosine(&self, other: &Embedding) -> f64 {
        match (self, other) {
            (Embedding::Sparse(a), Embedding::Sparse(b)) => a.cosine(b),
            (Embedding::Dense(a), Embedding::Dense(b)) => dense_cosine(a, b),
            _ => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Embedding::Sparse(v) => v.is_zero(),
            Embedding::Dense(v) => v.iter().all(|x| *x == 0.0),
        }
    }
}

pub fn dense_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    /// TF-IDF fitted on a text collection; unseen tokens keep maximal idf so any
    /// text with at least one token embeds to a non-zero vector.
    TfidfNative(TfidfModel),
    /// Precomputed vectors keyed by text.
    ExternalVectors {
        dimension: usize,
        table: HashMap<String, Vec<f64>>,
    },
}

#[derive(Deserialize)]
struct VectorLine {
    text: String,
    vector: Vec<f64>,
}

impl EmbeddingProvider {
    pub fn tfidf<'a, I>(texts: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        EmbeddingProvider::TfidfNative(TfidfModel::fit(texts, OovPolicy::MaxIdf))
    }

    pub fn from_vectors(entries: Vec<(String, Vec<f64>)>) -> Result<Self, NegativesError> {
        let dimension = entries.first().map_or(0, |(_, v)| v.len());
        let mut table = HashMap::with_capacity(entries.len());
        for (text, vector) in entries {
            if vector.len() != dimension {
                return Err(NegativesError::Embedding(format!(
                    "vector for {text:?} has dimension {}, expected {dimension}",
                    vector.len()
                )));
            }
            if vector.iter().all(|x| *x == 0.0) {
                return Err(NegativesError::Embedding(format!(
                    "zero vector for {text:?}"
                )));
            }
            table.insert(text, vector);
        }
        Ok(EmbeddingProvider::ExternalVectors { dimension, table })
    }

    /// Load `{"text": ..., "vector": [...]}` lines.
    pub fn from_vectors_file(path: &Path) -> Result<Self, NegativesError> {
        let lines: Vec<VectorLine> = crate::jsonl::read_jsonl(path)
            .map_err(|e| NegativesError::Embedding(e.to_string()))?;
        Self::from_vectors(lines.into_iter().map(|l| (l.text, l.vector)).collect())
    }

    pub fn dimension(&self) -> usize {
        match self {
            EmbeddingProvider::TfidfNative(m) => m.vocabulary_size(),
            EmbeddingProvider::ExternalVectors { dimension, .. } => *dimension,
        }
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, NegativesError> {
        match self {
            EmbeddingProvider::TfidfNative(m) => Ok(Embedding::Sparse(m.transform(text))),
            EmbeddingProvider::ExternalVectors { table, .. } => table
                .get(text)
                .or_else(|| table.get(text.trim()))
                .cloned()
                .map(Embedding::Dense)
                .ok_or_else(|| NegativesError::Embedding(format!("no vector for {text:?}"))),
        }
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, NegativesError> {
        Ok(self.embed(a)?.cosine(&self.embed(b)?))
    }
}
