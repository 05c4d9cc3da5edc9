//! Baseline negative samplers over a corpus response pool: random, BM25,
//! semi-hard embedding retrieval, and human passthrough.

mod bm25;
mod embedding;
mod random;
mod semihard;

use std::collections::HashSet;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{retrieve_bm25, Bm25Index, Bm25Params, Bm25Stats};
pub use embedding::{dense_cosine, Embedding, EmbeddingProvider};
pub use random::{sample_random, sample_random_with};
pub use semihard::{
    retrieve_semihard, retrieve_semihard_scored, EmbeddedPool, SemiHardConfig,
};

use crate::corpus::{Corpus, NegativeEntry, NegativeTable};
use crate::seed::rng_for;

#[derive(Debug, Error)]
pub enum NegativesError {
    #[error("pool too small: {eligible} eligible responses, {needed} needed")]
    PoolTooSmall { eligible: usize, needed: usize },
    #[error("unknown document {0}")]
    UnknownDocument(usize),
    #[error("only {eligible} candidates within the margin, {needed} needed (short by {shortfall})")]
    InsufficientEligible {
        eligible: usize,
        needed: usize,
        shortfall: usize,
    },
    #[error("embedding: {0}")]
    Embedding(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeMethod {
    Random,
    Bm25,
    Semihard,
    Human,
}

impl FromStr for NegativeMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "bm25" => Ok(Self::Bm25),
            "semihard" | "semi-hard" => Ok(Self::Semihard),
            "human" => Ok(Self::Human),
            other => Err(format!("unknown negative method {other:?}")),
        }
    }
}

/// Settings for [`build_negative_table`].
#[derive(Debug, Clone)]
pub struct SamplerSettings {
    pub method: NegativeMethod,
    pub n: usize,
    pub alpha: f64,
    pub bm25: Bm25Params,
    pub seed: u64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            method: NegativeMethod::Random,
            n: 5,
            alpha: 0.07,
            bm25: Bm25Params::default(),
            seed: 0,
        }
    }
}

/// Negatives for every record of `corpus` that the method can serve.
///
/// Records the method cannot serve (too few eligible responses, missing human
/// negatives) are returned by id in the second slot.
pub fn build_negative_table(
    corpus: &Corpus,
    settings: &SamplerSettings,
    provider: Option<&EmbeddingProvider>,
) -> Result<(NegativeTable, Vec<String>), NegativesError> {
    let method_name = format!("{:?}", settings.method).to_lowercase();
    let n = settings.n;
    let results: Vec<Result<NegativeEntry, String>> = match settings.method {
        NegativeMethod::Human => corpus
            .records
            .iter()
            .map(|r| {
                let negs: Vec<String> = r
                    .adversarial_negatives
                    .iter()
                    .filter(|neg| !r.positives.contains(neg))
                    .take(n)
                    .cloned()
                    .collect();
                if negs.len() == n {
                    Ok(NegativeEntry::new(&r.id, negs))
                } else {
                    Err(r.id.clone())
                }
            })
            .collect(),
        NegativeMethod::Random => corpus
            .records
            .par_iter()
            .map(|r| {
                let exclude: HashSet<&str> = r.positives.iter().map(String::as_str).collect();
                let mut rng = rng_for(settings.seed, &format!("random-negatives/{}", r.id));
                sample_random_with(&corpus.response_pool, &exclude, n, &mut rng)
                    .map(|negs| NegativeEntry::new(&r.id, negs))
                    .map_err(|_| r.id.clone())
            })
            .collect(),
        NegativeMethod::Bm25 => {
            let index = Bm25Index::build(corpus.response_pool.texts().iter().cloned(), settings.bm25);
            corpus
                .records
                .par_iter()
                .map(|r| {
                    retrieve_bm25(r, &index, n, &HashSet::new())
                        .map(|negs| NegativeEntry::new(&r.id, negs))
                        .map_err(|_| r.id.clone())
                })
                .collect()
        }
        NegativeMethod::Semihard => {
            let owned;
            let provider = match provider {
                Some(p) => p,
                None => {
                    owned = EmbeddingProvider::tfidf(
                        corpus.response_pool.texts().iter().map(String::as_str),
                    );
                    &owned
                }
            };
            let cfg = SemiHardConfig {
                alpha: settings.alpha,
                n,
            };
            cfg.validate()?;
            let pool = EmbeddedPool::new(corpus.response_pool.texts(), provider)?;
            corpus
                .records
                .par_iter()
                .map(|r| {
                    let exclude: HashSet<&str> =
                        r.positives.iter().map(String::as_str).collect();
                    retrieve_semihard(&r.positives[0], &pool, provider, &cfg, &exclude)
                        .map(|negs| NegativeEntry::new(&r.id, negs))
                        .map_err(|_| r.id.clone())
                })
                .collect()
        }
    };

    let mut table = NegativeTable::new(method_name);
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(entry) => table.insert(entry),
            Err(id) => skipped.push(id),
        }
    }
    if !skipped.is_empty() {
        log::warn!(
            "{:?} sampler skipped {} of {} records",
            settings.method,
            skipped.len(),
            corpus.len()
        );
    }
    Ok((table, skipped))
}
