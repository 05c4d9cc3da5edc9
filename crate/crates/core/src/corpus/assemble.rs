//! Candidate-set assembly: 11-wide training instances (1 positive, 5 random,
//! 5 adversarial) and 6-wide test instances (1 positive, 5 of one type).
//!
//! Candidate content is drawn from a stream keyed by the sampling seed and the
//! record id; the presentation order is a permutation keyed by the order seed.

use std::collections::{BTreeMap, HashSet};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, DialogueRecord, ResponsePool, Source, Utterance};
use crate::negatives::sample_random_with;
use crate::seed::rng_for;

pub const NEGATIVES_PER_TYPE: usize = 5;
pub const TRAIN_WIDTH: usize = 1 + 2 * NEGATIVES_PER_TYPE;
pub const TEST_WIDTH: usize = 1 + NEGATIVES_PER_TYPE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateLabel {
    Positive,
    RandomNeg,
    AdversarialNeg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInstance {
    pub context_id: String,
    pub context: Vec<Utterance>,
    pub candidates: Vec<String>,
    pub positive_index: usize,
    pub labels: Vec<CandidateLabel>,
}

impl CandidateInstance {
    pub fn width(&self) -> usize {
        self.candidates.len()
    }

    pub fn positive(&self) -> &str {
        &self.candidates[self.positive_index]
    }

    pub fn context_text(&self) -> String {
        self.context
            .iter()
            .map(|u| u.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.candidates.len() != self.labels.len() {
            return Err("labels and candidates differ in length".into());
        }
        if self.positive_index >= self.candidates.len() {
            return Err("positive index out of range".into());
        }
        let positives = self
            .labels
            .iter()
            .filter(|l| **l == CandidateLabel::Positive)
            .count();
        if positives != 1 || self.labels[self.positive_index] != CandidateLabel::Positive {
            return Err("instance must have exactly one positive at positive_index".into());
        }
        let pos = self.positive();
        if self
            .candidates
            .iter()
            .enumerate()
            .any(|(i, c)| i != self.positive_index && c == pos)
        {
            return Err("positive appears among negatives".into());
        }
        Ok(())
    }
}

/// Where the five adversarial training negatives come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversarialSource {
    Human,
    Generated,
    Bm25,
    Semihard,
    Random,
}

impl FromStr for AdversarialSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Self::Human),
            "generated" => Ok(Self::Generated),
            "bm25" => Ok(Self::Bm25),
            "semihard" | "semi-hard" => Ok(Self::Semihard),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown negative source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Random,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeEntry {
    pub id: String,
    pub negatives: Vec<String>,
}

impl NegativeEntry {
    pub fn new(id: &str, negatives: Vec<String>) -> Self {
        Self {
            id: id.to_owned(),
            negatives,
        }
    }
}

/// Negatives keyed by record id, as produced by a sampler or the generator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NegativeTable {
    pub method: String,
    entries: BTreeMap<String, Vec<String>>,
}

impl NegativeTable {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries(method: impl Into<String>, entries: Vec<NegativeEntry>) -> Self {
        let mut table = Self::new(method);
        for e in entries {
            table.insert(e);
        }
        table
    }

    pub fn insert(&mut self, entry: NegativeEntry) {
        self.entries.insert(entry.id, entry.negatives);
    }

    pub fn get(&self, id: &str) -> Option<&[String]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in id order.
    pub fn to_entries(&self) -> Vec<NegativeEntry> {
        self.entries
            .iter()
            .map(|(id, negs)| NegativeEntry::new(id, negs.clone()))
            .collect()
    }
}

fn not_positive<'a>(record: &'a DialogueRecord, negs: &'a [String]) -> Vec<String> {
    negs.iter()
        .filter(|n| !record.positives.contains(n))
        .cloned()
        .collect()
}

fn shuffle_into_instance<R: Rng>(
    record: &DialogueRecord,
    negatives: Vec<(String, CandidateLabel)>,
    rng: &mut R,
) -> CandidateInstance {
    let mut items = Vec::with_capacity(negatives.len() + 1);
    items.push((record.positives[0].clone(), CandidateLabel::Positive));
    items.extend(negatives);
    items.shuffle(rng);
    let positive_index = items
        .iter()
        .position(|(_, l)| *l == CandidateLabel::Positive)
        .expect("positive inserted above");
    let (candidates, labels) = items.into_iter().unzip();
    CandidateInstance {
        context_id: record.id.clone(),
        context: record.context.clone(),
        candidates,
        positive_index,
        labels,
    }
}

fn random_fill<R: Rng>(
    pool: &ResponsePool,
    record: &DialogueRecord,
    taken: &[String],
    n: usize,
    rng: &mut R,
) -> Result<Vec<(String, CandidateLabel)>, CorpusError> {
    let exclude: HashSet<&str> = record
        .positives
        .iter()
        .chain(taken)
        .map(String::as_str)
        .collect();
    Ok(sample_random_with(pool, &exclude, n, rng)?
        .into_iter()
        .map(|s| (s, CandidateLabel::RandomNeg))
        .collect())
}

/// Seeds controlling candidate content and candidate order separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblySeeds {
    pub sampling: u64,
    pub order: u64,
}

/// 11-candidate training instances; `seed` permutes the candidate order.
pub fn assemble_training_instances(
    corpus: &Corpus,
    source: AdversarialSource,
    table: Option<&NegativeTable>,
    seed: u64,
) -> Result<Vec<CandidateInstance>, CorpusError> {
    assemble_training_instances_with(
        corpus,
        source,
        table,
        AssemblySeeds {
            sampling: 0,
            order: seed,
        },
    )
}

pub fn assemble_training_instances_with(
    corpus: &Corpus,
    source: AdversarialSource,
    table: Option<&NegativeTable>,
    seeds: AssemblySeeds,
) -> Result<Vec<CandidateInstance>, CorpusError> {
    let table = match source {
        AdversarialSource::Generated | AdversarialSource::Bm25 | AdversarialSource::Semihard => {
            Some(table.ok_or(CorpusError::MissingNegativeTable(source))?)
        }
        _ => None,
    };
    let built: Vec<Option<CandidateInstance>> = corpus
        .records
        .par_iter()
        .map(|record| {
            let adversarial: Vec<String> = match source {
                AdversarialSource::Random => Vec::new(),
                AdversarialSource::Human => {
                    let negs = not_positive(record, &record.adversarial_negatives);
                    if negs.len() < NEGATIVES_PER_TYPE {
                        return Ok(None);
                    }
                    negs
                }
                _ => {
                    let Some(negs) = table.and_then(|t| t.get(&record.id)) else {
                        return Ok(None);
                    };
                    let negs = not_positive(record, negs);
                    if negs.len() < NEGATIVES_PER_TYPE {
                        return Err(CorpusError::InsufficientNegatives {
                            id: record.id.clone(),
                            needed: NEGATIVES_PER_TYPE,
                            available: negs.len(),
                        });
                    }
                    negs
                }
            };
            let adversarial: Vec<String> =
                adversarial.into_iter().take(NEGATIVES_PER_TYPE).collect();
            let random_count = TRAIN_WIDTH - 1 - adversarial.len();
            let mut sample_rng = rng_for(seeds.sampling, &format!("train/{}", record.id));
            let mut negatives = random_fill(
                &corpus.response_pool,
                record,
                &adversarial,
                random_count,
                &mut sample_rng,
            )?;
            negatives.extend(
                adversarial
                    .into_iter()
                    .map(|s| (s, CandidateLabel::AdversarialNeg)),
            );
            let mut order_rng = rng_for(seeds.order, &format!("train-order/{}", record.id));
            Ok(Some(shuffle_into_instance(record, negatives, &mut order_rng)))
        })
        .collect::<Result<_, CorpusError>>()?;
    Ok(built.into_iter().flatten().collect())
}

/// Negatives for the PersonaChat adversarial test: one utterance sampled from
/// the context itself, the remainder drawn from the response pool.
pub fn make_personachat_adversarial(
    record: &DialogueRecord,
    pool: &ResponsePool,
    n: usize,
    seed: u64,
) -> Result<Vec<String>, CorpusError> {
    let mut rng = rng_for(seed, &format!("personachat-adv/{}", record.id));
    personachat_adversarial_with(record, pool, n, &mut rng)
}

fn personachat_adversarial_with<R: Rng>(
    record: &DialogueRecord,
    pool: &ResponsePool,
    n: usize,
    rng: &mut R,
) -> Result<Vec<String>, CorpusError> {
    if n < 1 {
        return Err(CorpusError::ZeroNegatives);
    }
    let in_context: Vec<&str> = record
        .context
        .iter()
        .map(|u| u.text.as_str())
        .filter(|t| !record.positives.iter().any(|p| p == t))
        .collect();
    let chosen = in_context
        .choose(rng)
        .ok_or_else(|| CorpusError::NoInContextCandidate(record.id.clone()))?
        .to_string();
    let mut out = vec![chosen.clone()];
    out.extend(
        random_fill(pool, record, &[chosen], n - 1, rng)?
            .into_iter()
            .map(|(s, _)| s),
    );
    Ok(out)
}

/// 6-candidate test instances; `seed` permutes the candidate order.
pub fn assemble_test_instances(
    corpus: &Corpus,
    kind: TestKind,
    seed: u64,
) -> Result<Vec<CandidateInstance>, CorpusError> {
    assemble_test_instances_with(
        corpus,
        kind,
        AssemblySeeds {
            sampling: 0,
            order: seed,
        },
    )
}

pub fn assemble_test_instances_with(
    corpus: &Corpus,
    kind: TestKind,
    seeds: AssemblySeeds,
) -> Result<Vec<CandidateInstance>, CorpusError> {
    let built: Vec<Option<CandidateInstance>> = corpus
        .records
        .par_iter()
        .map(|record| {
            let mut sample_rng = rng_for(seeds.sampling, &format!("test/{:?}/{}", kind, record.id));
            let negatives = match kind {
                TestKind::Random => random_fill(
                    &corpus.response_pool,
                    record,
                    &[],
                    NEGATIVES_PER_TYPE,
                    &mut sample_rng,
                )?,
                TestKind::Adversarial if record.source == Source::PersonaChat => {
                    let negs = personachat_adversarial_with(
                        record,
                        &corpus.response_pool,
                        NEGATIVES_PER_TYPE,
                        &mut sample_rng,
                    )?;
                    negs.into_iter()
                        .enumerate()
                        .map(|(i, s)| {
                            let label = if i == 0 {
                                CandidateLabel::AdversarialNeg
                            } else {
                                CandidateLabel::RandomNeg
                            };
                            (s, label)
                        })
                        .collect()
                }
                TestKind::Adversarial => {
                    let negs = not_positive(record, &record.adversarial_negatives);
                    if negs.len() < NEGATIVES_PER_TYPE {
                        return Ok(None);
                    }
                    negs.into_iter()
                        .take(NEGATIVES_PER_TYPE)
                        .map(|s| (s, CandidateLabel::AdversarialNeg))
                        .collect()
                }
            };
            let mut order_rng =
                rng_for(seeds.order, &format!("test-order/{:?}/{}", kind, record.id));
            Ok(Some(shuffle_into_instance(record, negatives, &mut order_rng)))
        })
        .collect::<Result<_, CorpusError>>()?;
    Ok(built.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{alternating_context, Split};

    fn record(i: usize, adversarial: usize) -> DialogueRecord {
        DialogueRecord {
            id: format!("r{i}"),
            context: alternating_context(&[format!("hello number {i}"), format!("reply {i}")]),
            persona: None,
            positives: vec![format!("positive {i}")],
            adversarial_negatives: (0..adversarial).map(|j| format!("adv {i}-{j}")).collect(),
            source: Source::Synthetic,
        }
    }

    fn corpus(n: usize) -> Corpus {
        Corpus::new(
            Split::Train,
            (0..n).map(|i| record(i, if i % 3 == 0 { 2 } else { 5 })).collect(),
        )
        .unwrap()
    }

    #[test]
    fn training_width_and_exclusion() {
        let c = corpus(30);
        let inst = assemble_training_instances(&c, AdversarialSource::Human, None, 1).unwrap();
        assert_eq!(inst.len(), 20);
        for i in &inst {
            assert_eq!(i.width(), TRAIN_WIDTH);
            i.validate().unwrap();
            let count = |l| i.labels.iter().filter(|x| **x == l).count();
            assert_eq!(count(CandidateLabel::RandomNeg), 5);
            assert_eq!(count(CandidateLabel::AdversarialNeg), 5);
        }
    }

    #[test]
    fn seeds_permute_the_same_multiset() {
        let c = corpus(12);
        let a = assemble_training_instances(&c, AdversarialSource::Human, None, 1).unwrap();
        let b = assemble_training_instances(&c, AdversarialSource::Human, None, 2).unwrap();
        let mut any_diff = false;
        for (x, y) in a.iter().zip(&b) {
            let (mut sx, mut sy) = (x.candidates.clone(), y.candidates.clone());
            any_diff |= sx != sy;
            sx.sort();
            sy.sort();
            assert_eq!(sx, sy);
        }
        assert!(any_diff);
    }

    #[test]
    fn table_sources_require_a_table_and_enough_negatives() {
        let c = corpus(6);
        assert!(matches!(
            assemble_training_instances(&c, AdversarialSource::Generated, None, 0),
            Err(CorpusError::MissingNegativeTable(_))
        ));
        let mut table = NegativeTable::new("generated");
        table.insert(NegativeEntry::new("r1", vec!["a".into(), "b".into()]));
        let err = assemble_training_instances(&c, AdversarialSource::Generated, Some(&table), 0)
            .unwrap_err();
        assert!(matches!(err, CorpusError::InsufficientNegatives { ref id, .. } if id == "r1"));
    }

    #[test]
    fn random_source_uses_ten_random() {
        let c = corpus(20);
        let inst = assemble_training_instances(&c, AdversarialSource::Random, None, 3).unwrap();
        assert_eq!(inst.len(), 20);
        assert!(inst.iter().all(|i| i
            .labels
            .iter()
            .filter(|l| **l == CandidateLabel::RandomNeg)
            .count()
            == 10));
    }

    #[test]
    fn test_instances_have_width_six() {
        let c = corpus(30);
        for kind in [TestKind::Random, TestKind::Adversarial] {
            for i in assemble_test_instances(&c, kind, 5).unwrap() {
                assert_eq!(i.width(), TEST_WIDTH);
                i.validate().unwrap();
            }
        }
    }

    #[test]
    fn personachat_adversarial_contains_context_utterance() {
        let c = corpus(20);
        let mut r = c.records[1].clone();
        r.context = alternating_context(&["first turn", "second turn", "third turn"]);
        let negs = make_personachat_adversarial(&r, &c.response_pool, 5, 7).unwrap();
        assert_eq!(negs.len(), 5);
        let ctx: Vec<&str> = r.context.iter().map(|u| u.text.as_str()).collect();
        assert!(negs.iter().any(|n| ctx.contains(&n.as_str())));
        assert_eq!(negs, make_personachat_adversarial(&r, &c.response_pool, 5, 7).unwrap());

        let one = make_personachat_adversarial(&r, &c.response_pool, 1, 7).unwrap();
        assert_eq!(one.len(), 1);
        assert!(ctx.contains(&one[0].as_str()));
        assert!(matches!(
            make_personachat_adversarial(&r, &c.response_pool, 0, 7),
            Err(CorpusError::ZeroNegatives)
        ));
    }
}
