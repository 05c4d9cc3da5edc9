//! Ranking metrics, response-quality statistics, contamination analysis and
//! the ablation grid runner.

mod ablation;
mod contamination;
mod quality;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{
    format_ablation_table, run_ablation, AblationAxes, AblationCell, AblationCellSpec,
    AblationGrid, AblationInputs, BackendFactory,
};
pub use contamination::{contamination_report, format_contamination_table, ContaminationRow};
pub use quality::{
    format_quality_table, quality_report, LabeledResponse, QualityStats, SummaryStats,
    TypeQuality,
};

use crate::corpus::CandidateInstance;
use crate::ranker::{featurize_instance, score, CorpusStats, RankerError, RankerModel};
use crate::seed::rng_for;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no outcomes to aggregate")]
    Empty,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("mixed candidate widths {0} and {1}")]
    WidthMismatch(usize, usize),
    #[error(transparent)]
    Ranker(#[from] RankerError),
    #[error(transparent)]
    Embedding(#[from] crate::negatives::NegativesError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingOutcome {
    pub context_id: String,
    pub scores: Vec<f64>,
    pub positive_index: usize,
    pub rank: usize,
}

/// 1-based rank of the positive; it loses every tie.
pub fn rank_of_positive(scores: &[f64], positive_index: usize) -> usize {
    let s = scores[positive_index];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &x)| j != positive_index && x >= s)
        .count()
}

pub fn recall_at_1(outcomes: &[RankingOutcome]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(outcomes.iter().filter(|o| o.rank == 1).count() as f64 / outcomes.len() as f64)
}

pub fn mean_reciprocal_rank(outcomes: &[RankingOutcome]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(outcomes.iter().map(|o| 1.0 / o.rank as f64).sum::<f64>() / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_at_1: f64,
    pub mrr: f64,
    pub outcomes: Vec<RankingOutcome>,
}

pub fn evaluate(
    model: &RankerModel,
    instances: &[CandidateInstance],
    stats: &CorpusStats,
) -> Result<EvalReport, EvalError> {
    if let Some(first) = instances.first() {
        if let Some(other) = instances.iter().find(|i| i.width() != first.width()) {
            return Err(EvalError::WidthMismatch(first.width(), other.width()));
        }
    }
    let outcomes = instances
        .par_iter()
        .map(|inst| {
            let f = featurize_instance(inst, stats)?;
            let scores = f
                .features
                .iter()
                .map(|x| score(model, x))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RankingOutcome {
                context_id: inst.context_id.clone(),
                rank: rank_of_positive(&scores, inst.positive_index),
                positive_index: inst.positive_index,
                scores,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport {
        recall_at_1: recall_at_1(&outcomes)?,
        mrr: mean_reciprocal_rank(&outcomes)?,
        outcomes,
    })
}

pub fn jaccard<T: Ord>(a: &std::collections::BTreeSet<T>, b: &std::collections::BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<(), EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooShort(xs.len()));
    }
    Ok(())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub difference: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
}

impl BootstrapInterval {
    /// The whole interval lies above zero.
    pub fn strictly_positive(&self) -> bool {
        self.lower > 0.0
    }
}

/// Percentile bootstrap interval for mean(a) − mean(b), resampling each group
/// independently.
pub fn bootstrap_mean_difference(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapInterval, EvalError> {
    if a.is_empty() || b.is_empty() || resamples == 0 {
        return Err(EvalError::Empty);
    }
    let mut rng = rng_for(seed, "bootstrap");
    let mut resample_mean = |xs: &[f64]| {
        (0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]).sum::<f64>() / xs.len() as f64
    };
    let mut diffs: Vec<f64> = (0..resamples)
        .map(|_| resample_mean(a) - resample_mean(b))
        .collect();
    diffs.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let at = |q: f64| diffs[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Ok(BootstrapInterval {
        difference: mean(a) - mean(b),
        lower: at(tail),
        upper: at(1.0 - tail),
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn outcomes(ranks: &[usize]) -> Vec<RankingOutcome> {
        ranks
            .iter()
            .map(|&rank| RankingOutcome {
                context_id: String::new(),
                scores: vec![],
                positive_index: 0,
                rank,
            })
            .collect()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(recall_at_1(&outcomes(&[1, 1, 2, 1])).unwrap(), 0.75);
        assert!((mean_reciprocal_rank(&outcomes(&[1, 2, 4])).unwrap() - 0.5833333333333334).abs() < 1e-12);
        assert!(recall_at_1(&[]).is_err());
    }

    #[test]
    fn pessimistic_ties() {
        assert_eq!(rank_of_positive(&[0.0; 6], 2), 6);
        assert_eq!(rank_of_positive(&[1.0, 0.5, 1.0], 0), 2);
        assert_eq!(rank_of_positive(&[2.0, 0.5, 1.0], 0), 1);
    }

    #[test]
    fn jaccard_examples() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(jaccard(&s(&["a", "b"]), &s(&["a", "b"])), 1.0);
        assert!((jaccard(&s(&["a", "b"]), &s(&["b", "c"])) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard(&s(&["a"]), &s(&["c"])), 0.0);
        assert_eq!(jaccard(&s(&[]), &s(&[])), 0.0);
    }

    #[test]
    fn correlation_examples() {
        let xs = [1.0, 2.0, 3.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&xs, &[2.0, 4.0, 7.0]).unwrap() - 0.9933992677987828).abs() < 1e-12);
        assert!((spearman(&xs, &[9.0, 5.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&xs, &[1.0, 1.0, 1.0]), Err(EvalError::ZeroVariance)));
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0]), vec![1.5, 3.0, 1.5]);
    }

    #[test]
    fn bootstrap_separates_shifted_samples() {
        let a: Vec<f64> = (0..200).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let b: Vec<f64> = (0..200).map(|i| (i % 5) as f64 * 0.1).collect();
        let r = bootstrap_mean_difference(&a, &b, 1000, 0.95, 0).unwrap();
        assert!(r.strictly_positive());
        assert!(r.lower <= r.difference && r.difference <= r.upper);
    }
}
