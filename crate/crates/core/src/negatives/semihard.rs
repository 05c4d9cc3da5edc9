//! Semi-hard retrieval: the most positive-like responses that still sit a
//! margin `alpha` below the positive's self-similarity.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::embedding::{Embedding, EmbeddingProvider};
use super::NegativesError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiHardConfig {
    pub alpha: f64,
    pub n: usize,
}

impl Default for SemiHardConfig {
    fn default() -> Self {
        Self { alpha: 0.07, n: 5 }
    }
}

impl SemiHardConfig {
    pub fn validate(&self) -> Result<(), NegativesError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(NegativesError::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Largest cosine an eligible candidate may have.
    pub fn threshold(&self) -> f64 {
        1.0 - self.alpha
    }
}

/// Response pool embedded once, for static sampling across records.
#[derive(Debug, Clone)]
pub struct EmbeddedPool {
    texts: Vec<String>,
    vectors: Vec<Embedding>,
}

impl EmbeddedPool {
    pub fn new(texts: &[String], provider: &EmbeddingProvider) -> Result<Self, NegativesError> {
        let vectors = texts
            .iter()
            .map(|t| provider.embed(t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            texts: texts.to_vec(),
            vectors,
        })
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
}

/// Eligible candidates with their cosine to the positive, best first.
/// Ties are broken by pool order.
pub fn retrieve_semihard_scored(
    positive: &str,
    pool: &EmbeddedPool,
    provider: &EmbeddingProvider,
    cfg: &SemiHardConfig,
    exclude: &HashSet<&str>,
) -> Result<Vec<(String, f64)>, NegativesError> {
    cfg.validate()?;
    let anchor = provider.embed(positive)?;
    let threshold = cfg.threshold();
    let mut eligible: Vec<(usize, f64)> = pool
        .vectors
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(pool.texts[*i].as_str()))
        .map(|(i, v)| (i, anchor.cosine(v)))
        .filter(|(_, c)| *c <= threshold)
        .collect();
    if eligible.len() < cfg.n {
        return Err(NegativesError::InsufficientEligible {
            eligible: eligible.len(),
            needed: cfg.n,
            shortfall: cfg.n - eligible.len(),
        });
    }
    eligible.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    eligible.truncate(cfg.n);
    Ok(eligible
        .into_iter()
        .map(|(i, c)| (pool.texts[i].clone(), c))
        .collect())
}

pub fn retrieve_semihard(
    positive: &str,
    pool: &EmbeddedPool,
    provider: &EmbeddingProvider,
    cfg: &SemiHardConfig,
    exclude: &HashSet<&str>,
) -> Result<Vec<String>, NegativesError> {
    Ok(
        retrieve_semihard_scored(positive, pool, provider, cfg, exclude)?
            .into_iter()
            .map(|(t, _)| t)
            .collect(),
    )
}
