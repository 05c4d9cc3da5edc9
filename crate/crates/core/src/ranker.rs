//! Feature-based response scorer trained with a listwise softmax
//! cross-entropy objective over candidate sets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CandidateInstance;
use crate::negatives::{Bm25Index, Bm25Params};
use crate::text::{bigrams, content_words, token_set, tokenize, OovPolicy, TfidfModel};

pub const FEATURE_NAMES: [&str; 7] = [
    "bias",
    "tfidf_cosine",
    "jaccard_overlap",
    "bigram_overlap",
    "bm25_score_normalized",
    "length_ratio",
    "context_keyword_coverage",
];
pub const FEATURE_COUNT: usize = FEATURE_NAMES.len();

#[derive(Debug, Error)]
pub enum RankerError {
    #[error("empty response")]
    EmptyResponse,
    #[error("weight arity {expected} does not match feature arity {got}")]
    Arity { expected: usize, got: usize },
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("positive index {index} out of range for width {width}")]
    PositiveIndex { index: usize, width: usize },
    #[error("candidate lists need at least two entries, got {0}")]
    TooNarrow(usize),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("mixed candidate widths {0} and {1}")]
    WidthMismatch(usize, usize),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize, trace: Vec<TraceStep> },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
}

/// Corpus statistics the features depend on, built over the training pool.
#[derive(Debug, Clone)]
pub struct CorpusStats {
    tfidf: TfidfModel,
    bm25: Bm25Index,
}

impl CorpusStats {
    pub fn build<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let texts: Vec<String> = texts.into_iter().map(|s| s.as_ref().to_owned()).collect();
        Self {
            tfidf: TfidfModel::fit(texts.iter().map(String::as_str), OovPolicy::Ignore),
            bm25: Bm25Index::build(texts, Bm25Params::default()),
        }
    }

    /// Statistics over every distinct context and candidate of `instances`.
    pub fn from_instances(instances: &[CandidateInstance]) -> Self {
        let mut texts = std::collections::BTreeSet::new();
        for inst in instances {
            texts.insert(inst.context_text());
            texts.extend(inst.candidates.iter().cloned());
        }
        Self::build(texts)
    }

    pub fn tfidf(&self) -> &TfidfModel {
        &self.tfidf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }
}

fn set_jaccard<T: Ord>(a: &std::collections::BTreeSet<T>, b: &std::collections::BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

pub fn featurize(context: &str, response: &str, stats: &CorpusStats) -> Result<FeatureVector, RankerError> {
    let r_tokens = tokenize(response);
    if r_tokens.is_empty() {
        return Err(RankerError::EmptyResponse);
    }
    let c_tokens = tokenize(context);
    let tfidf = stats.tfidf.similarity(context, response).clamp(0.0, 1.0);
    let jaccard = set_jaccard(&token_set(context), &token_set(response));
    let bigram = set_jaccard(&bigrams(&c_tokens), &bigrams(&r_tokens));
    let bm25 = stats.bm25.score_text(&c_tokens, &r_tokens).max(0.0);
    let (lc, lr) = (c_tokens.len().max(1) as f64, r_tokens.len() as f64);
    let ctx_words = content_words(context);
    let coverage = if ctx_words.is_empty() {
        0.0
    } else {
        ctx_words.intersection(&content_words(response)).count() as f64 / ctx_words.len() as f64
    };
    Ok(FeatureVector([
        1.0,
        tfidf,
        jaccard,
        bigram,
        bm25 / (1.0 + bm25),
        lc.min(lr) / lc.max(lr),
        coverage,
    ]))
}

/// Features of every candidate of an instance, plus its positive index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizedInstance {
    pub context_id: String,
    pub features: Vec<FeatureVector>,
    pub positive_index: usize,
}

pub fn featurize_instance(inst: &CandidateInstance, stats: &CorpusStats) -> Result<FeaturizedInstance, RankerError> {
    let context = inst.context_text();
    let features = inst
        .candidates
        .iter()
        .map(|c| featurize(&context, c, stats))
        .collect::<Result<Vec<_>, _>>()?;
    if inst.positive_index >= features.len() {
        return Err(RankerError::PositiveIndex {
            index: inst.positive_index,
            width: features.len(),
        });
    }
    Ok(FeaturizedInstance {
        context_id: inst.context_id.clone(),
        features,
        positive_index: inst.positive_index,
    })
}

pub fn featurize_all(instances: &[CandidateInstance], stats: &CorpusStats) -> Result<Vec<FeaturizedInstance>, RankerError> {
    instances.par_iter().map(|i| featurize_instance(i, stats)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub loss: f64,
    pub step_size: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub trace: Vec<TraceStep>,
}

impl Default for RankerModel {
    fn default() -> Self {
        Self::zeros()
    }
}

impl RankerModel {
    pub fn zeros() -> Self {
        Self::with_weights(vec![0.0; FEATURE_COUNT])
    }

    pub fn with_weights(weights: Vec<f64>) -> Self {
        Self {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights,
            trace: Vec::new(),
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.trace.last().map(|t| t.loss)
    }
}

pub fn score(model: &RankerModel, f: &FeatureVector) -> Result<f64, RankerError> {
    if model.weights.len() != FEATURE_COUNT {
        return Err(RankerError::Arity {
            expected: model.weights.len(),
            got: FEATURE_COUNT,
        });
    }
    Ok(model.weights.iter().zip(f.0.iter()).map(|(w, x)| w * x).sum())
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// −log softmax(scores)[positive_index].
pub fn listwise_loss(scores: &[f64], positive_index: usize) -> Result<f64, RankerError> {
    if scores.len() < 2 {
        return Err(RankerError::TooNarrow(scores.len()));
    }
    if positive_index >= scores.len() {
        return Err(RankerError::PositiveIndex {
            index: positive_index,
            width: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(RankerError::NonFiniteScore);
    }
    // log Σ exp(s_j − max) = ln_1p(Σ_{j ≠ argmax} exp(s_j − max)), which keeps
    // precision when the positive dominates.
    let (top, max) = scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let rest: f64 = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, s)| (s - max).exp())
        .sum();
    Ok((max - scores[positive_index]) + rest.ln_1p())
}

fn instance_scores(weights: &[f64], inst: &FeaturizedInstance) -> Vec<f64> {
    inst.features
        .iter()
        .map(|f| weights.iter().zip(f.0.iter()).map(|(w, x)| w * x).sum())
        .collect()
}

/// Mean listwise loss over a featurized batch.
pub fn batch_loss(weights: &[f64], batch: &[FeaturizedInstance]) -> Result<f64, RankerError> {
    if batch.is_empty() {
        return Err(RankerError::EmptyBatch);
    }
    let losses = batch
        .par_iter()
        .map(|inst| listwise_loss(&instance_scores(weights, inst), inst.positive_index))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}

/// Mean over instances of Σ_j (p_j − 1[j = positive]) f_j.
pub fn gradient(weights: &[f64], batch: &[FeaturizedInstance]) -> Result<Vec<f64>, RankerError> {
    if batch.is_empty() {
        return Err(RankerError::EmptyBatch);
    }
    if weights.len() != FEATURE_COUNT {
        return Err(RankerError::Arity {
            expected: weights.len(),
            got: FEATURE_COUNT,
        });
    }
    let per_instance: Vec<[f64; FEATURE_COUNT]> = batch
        .par_iter()
        .map(|inst| {
            let p = softmax(&instance_scores(weights, inst));
            let mut g = [0.0; FEATURE_COUNT];
            for (j, f) in inst.features.iter().enumerate() {
                let coef = p[j] - if j == inst.positive_index { 1.0 } else { 0.0 };
                for (gk, fk) in g.iter_mut().zip(f.0.iter()) {
                    *gk += coef * fk;
                }
            }
            g
        })
        .collect();
    let mut total = vec![0.0; FEATURE_COUNT];
    for g in &per_instance {
        for (t, x) in total.iter_mut().zip(g.iter()) {
            *t += x;
        }
    }
    let n = batch.len() as f64;
    Ok(total.into_iter().map(|x| x / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub backtracking_factor: f64,
    pub max_backtracks: usize,
    /// Stop when an accepted step lowers the loss by less than this.
    pub tolerance: f64,
    /// Stop when the gradient norm falls below this.
    pub gradient_tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4.0,
            max_steps: 500,
            backtracking_factor: 0.5,
            max_backtracks: 40,
            tolerance: 1e-9,
            gradient_tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RankerError> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0) {
            problems.push("learning_rate must be positive");
        }
        if !(self.tolerance > 0.0) {
            problems.push("tolerance must be positive");
        }
        if !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0) {
            problems.push("backtracking_factor must lie in (0, 1)");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RankerError::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Full-batch gradient descent from zero weights with backtracking line search.
pub fn train(instances: &[CandidateInstance], cfg: &TrainConfig, stats: &CorpusStats) -> Result<RankerModel, RankerError> {
    let batch = featurize_all(instances, stats)?;
    train_featurized(&batch, cfg)
}

pub fn train_featurized(batch: &[FeaturizedInstance], cfg: &TrainConfig) -> Result<RankerModel, RankerError> {
    cfg.validate()?;
    let first = batch.first().ok_or(RankerError::EmptyBatch)?;
    let width = first.features.len();
    if let Some(other) = batch.iter().find(|b| b.features.len() != width) {
        return Err(RankerError::WidthMismatch(width, other.features.len()));
    }

    let mut model = RankerModel::zeros();
    let mut loss = batch_loss(&model.weights, batch)?;
    let mut grad = gradient(&model.weights, batch)?;
    let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
    model.trace.push(TraceStep {
        step: 0,
        loss,
        step_size: 0.0,
        gradient_norm: norm(&grad),
    });

    for step in 1..=cfg.max_steps {
        if norm(&grad) < cfg.gradient_tolerance {
            log::debug!("gradient norm below tolerance at step {step}");
            break;
        }
        let mut t = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let candidate: Vec<f64> = model.weights.iter().zip(&grad).map(|(w, g)| w - t * g).collect();
            match batch_loss(&candidate, batch) {
                Ok(l) if l < loss => {
                    accepted = Some((candidate, l));
                    break;
                }
                Ok(_) | Err(RankerError::NonFiniteScore) => t *= cfg.backtracking_factor,
                Err(e) => return Err(e),
            }
        }
        let Some((weights, new_loss)) = accepted else {
            log::debug!("line search found no decrease at step {step}");
            break;
        };
        if !new_loss.is_finite() {
            return Err(RankerError::NonFiniteLoss {
                step,
                trace: model.trace,
            });
        }
        let delta = loss - new_loss;
        model.weights = weights;
        loss = new_loss;
        grad = gradient(&model.weights, batch)?;
        model.trace.push(TraceStep {
            step,
            loss,
            step_size: t,
            gradient_norm: norm(&grad),
        });
        if delta < cfg.tolerance {
            break;
        }
    }
    Ok(model)
}

/// Min-max map into [0, 1]; constant input maps to 0.5.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0.5; scores.len()];
    }
    scores.iter().map(|s| (s - min) / (max - min)).collect()
}
