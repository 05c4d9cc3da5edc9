use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::negatives::EmbeddingProvider;
use crate::ranker::{featurize, normalize_scores, score, CorpusStats, RankerModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledResponse {
    pub context: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl SummaryStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: values.len(),
            mean,
            std: var.sqrt(),
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }

    /// `mean_{std}` with three decimals.
    pub fn subscript_format(&self) -> String {
        format!("{:.3}_{{{:.3}}}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeQuality {
    pub response_type: String,
    pub prediction: SummaryStats,
    pub similarity: SummaryStats,
    pub normalized_scores: Vec<f64>,
    pub similarities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityStats {
    pub types: Vec<TypeQuality>,
}

impl QualityStats {
    pub fn get(&self, response_type: &str) -> Option<&TypeQuality> {
        self.types.iter().find(|t| t.response_type == response_type)
    }
}

/// Prediction scores (min-max normalized over every response of every type)
/// and context-response similarities, summarized per response type.
pub fn quality_report(
    model: &RankerModel,
    stats: &CorpusStats,
    provider: &EmbeddingProvider,
    labeled: &BTreeMap<String, Vec<LabeledResponse>>,
) -> Result<QualityStats, EvalError> {
    let kept: Vec<(&String, &Vec<LabeledResponse>)> = labeled
        .iter()
        .filter(|(name, rs)| {
            if rs.len() < 2 {
                log::warn!("response type {name} has {} responses; omitted", rs.len());
                false
            } else {
                true
            }
        })
        .collect();

    let mut raw = Vec::new();
    let mut sims = Vec::new();
    for (_, responses) in &kept {
        let mut r = Vec::with_capacity(responses.len());
        let mut s = Vec::with_capacity(responses.len());
        for lr in responses.iter() {
            r.push(score(model, &featurize(&lr.context, &lr.response, stats)?)?);
            s.push(provider.similarity(&lr.context, &lr.response)?);
        }
        raw.push(r);
        sims.push(s);
    }
    let flat: Vec<f64> = raw.iter().flatten().copied().collect();
    let normalized = normalize_scores(&flat);

    let mut offset = 0;
    let mut types = Vec::new();
    for ((name, _), (r, s)) in kept.iter().zip(raw.iter().zip(sims)) {
        let norm = normalized[offset..offset + r.len()].to_vec();
        offset += r.len();
        types.push(TypeQuality {
            response_type: (*name).clone(),
            prediction: SummaryStats::of(&norm).ok_or(EvalError::Empty)?,
            similarity: SummaryStats::of(&s).ok_or(EvalError::Empty)?,
            normalized_scores: norm,
            similarities: s,
        });
    }
    Ok(QualityStats { types })
}

pub fn format_quality_table(q: &QualityStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>16} {:>16}", "Approach", "Pred. Score", "Similarity");
    for t in &q.types {
        let _ = writeln!(
            out,
            "{:<14} {:>16} {:>16}",
            t.response_type,
            t.prediction.subscript_format(),
            t.similarity.subscript_format()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_stats() {
        let s = SummaryStats::of(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.q3, 4.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.subscript_format(), "3.000_{1.414}");
    }
}
