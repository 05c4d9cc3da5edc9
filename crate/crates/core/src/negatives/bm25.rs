//! Okapi BM25 over a response pool.
//!
//! score(D, Q) = Σ_{t ∈ Q} IDF(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|D|/avgdl))
//! IDF(t) = ln((N − df + 0.5)/(df + 0.5) + 1)
//!
//! Query terms are deduplicated before scoring.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::NegativesError;
use crate::corpus::DialogueRecord;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
struct Doc {
    text: String,
    term_freq: HashMap<String, u32>,
    len: usize,
}

/// Corpus statistics that fully determine scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Stats {
    pub doc_freq: BTreeMap<String, usize>,
    pub live_docs: usize,
    pub total_len: usize,
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    docs: Vec<Option<Doc>>,
    postings: HashMap<String, Vec<(usize, u32)>>,
    live: usize,
    total_len: usize,
}

impl Bm25Index {
    pub fn new(params: Bm25Params) -> Self {
        Self {
            params,
            docs: Vec::new(),
            postings: HashMap::new(),
            live: 0,
            total_len: 0,
        }
    }

    pub fn build<I, S>(texts: I, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = Self::new(params);
        for t in texts {
            index.add_document(t);
        }
        index
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    /// Add a document; returns its id. Ids are assigned densely and never reused.
    pub fn add_document(&mut self, text: impl Into<String>) -> usize {
        let text = text.into();
        let tokens = tokenize(&text);
        let mut term_freq: HashMap<String, u32> = HashMap::new();
        for t in &tokens {
            *term_freq.entry(t.clone()).or_insert(0) += 1;
        }
        let id = self.docs.len();
        for (term, &tf) in &term_freq {
            self.postings.entry(term.clone()).or_default().push((id, tf));
        }
        self.live += 1;
        self.total_len += tokens.len();
        self.docs.push(Some(Doc {
            text,
            term_freq,
            len: tokens.len(),
        }));
        id
    }

    pub fn remove_document(&mut self, id: usize) -> Result<(), NegativesError> {
        let doc = self
            .docs
            .get_mut(id)
            .and_then(Option::take)
            .ok_or(NegativesError::UnknownDocument(id))?;
        for term in doc.term_freq.keys() {
            if let Some(list) = self.postings.get_mut(term) {
                list.retain(|(d, _)| *d != id);
                if list.is_empty() {
                    self.postings.remove(term);
                }
            }
        }
        self.live -= 1;
        self.total_len -= doc.len;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn doc_text(&self, id: usize) -> Option<&str> {
        self.docs.get(id)?.as_ref().map(|d| d.text.as_str())
    }

    pub fn doc_len(&self, id: usize) -> Option<usize> {
        self.docs.get(id)?.as_ref().map(|d| d.len)
    }

    /// Live document ids in ascending order.
    pub fn doc_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.docs
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.as_ref().map(|_| i))
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.live == 0 {
            0.0
        } else {
            self.total_len as f64 / self.live as f64
        }
    }

    pub fn stats(&self) -> Bm25Stats {
        Bm25Stats {
            doc_freq: self
                .postings
                .iter()
                .map(|(t, list)| (t.clone(), list.len()))
                .collect(),
            live_docs: self.live,
            total_len: self.total_len,
        }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.live as f64;
        let df = self.doc_freq(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: f64, doc_len: usize) -> f64 {
        if tf == 0.0 {
            return 0.0;
        }
        let Bm25Params { k1, b } = self.params;
        let avg = self.avg_doc_len();
        let len_ratio = if avg > 0.0 { doc_len as f64 / avg } else { 0.0 };
        idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len_ratio))
    }

    /// BM25 score of an indexed document.
    pub fn score(&self, query_tokens: &[String], doc_id: usize) -> Result<f64, NegativesError> {
        let doc = self
            .docs
            .get(doc_id)
            .and_then(Option::as_ref)
            .ok_or(NegativesError::UnknownDocument(doc_id))?;
        let terms: BTreeSet<&String> = query_tokens.iter().collect();
        Ok(terms
            .into_iter()
            .map(|t| {
                let tf = doc.term_freq.get(t).copied().unwrap_or(0) as f64;
                self.term_weight(self.idf(t), tf, doc.len)
            })
            .sum())
    }

    /// BM25 score of an arbitrary text against this index's statistics.
    pub fn score_text(&self, query_tokens: &[String], doc_tokens: &[String]) -> f64 {
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in doc_tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        let terms: BTreeSet<&String> = query_tokens.iter().collect();
        terms
            .into_iter()
            .map(|t| {
                let f = tf.get(t.as_str()).copied().unwrap_or(0) as f64;
                self.term_weight(self.idf(t), f, doc_tokens.len())
            })
            .sum()
    }

    /// Scores of every live document with at least one matching query term.
    pub fn score_all(&self, query_tokens: &[String]) -> HashMap<usize, f64> {
        let terms: BTreeSet<&String> = query_tokens.iter().collect();
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for t in terms {
            let Some(list) = self.postings.get(t.as_str()) else {
                continue;
            };
            let idf = self.idf(t);
            for &(doc_id, tf) in list {
                let len = self.doc_len(doc_id).expect("postings reference live docs");
                *scores.entry(doc_id).or_insert(0.0) += self.term_weight(idf, tf as f64, len);
            }
        }
        scores
    }

    /// Top-`n` documents for `query_tokens`, skipping texts in `exclude`.
    /// Ties are broken by ascending document id.
    pub fn top_n(
        &self,
        query_tokens: &[String],
        n: usize,
        exclude: &HashSet<&str>,
    ) -> Result<Vec<(usize, f64)>, NegativesError> {
        let scores = self.score_all(query_tokens);
        let eligible: Vec<usize> = self
            .doc_ids()
            .filter(|&id| !exclude.contains(self.doc_text(id).expect("live doc")))
            .collect();
        if eligible.len() < n {
            return Err(NegativesError::PoolTooSmall {
                eligible: eligible.len(),
                needed: n,
            });
        }
        let mut ranked: Vec<(usize, f64)> = eligible
            .into_iter()
            .map(|id| (id, scores.get(&id).copied().unwrap_or(0.0)))
            .collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        ranked.truncate(n);
        Ok(ranked)
    }
}

/// Retrieve the top-`n` responses for a dialogue context, excluding its positives.
pub fn retrieve_bm25(
    context: &DialogueRecord,
    index: &Bm25Index,
    n: usize,
    exclude: &HashSet<&str>,
) -> Result<Vec<String>, NegativesError> {
    let query = tokenize(&context.context_text());
    let mut skip: HashSet<&str> = exclude.clone();
    skip.extend(context.positives.iter().map(String::as_str));
    Ok(index
        .top_n(&query, n, &skip)?
        .into_iter()
        .map(|(id, _)| index.doc_text(id).expect("live doc").to_owned())
        .collect())
}
