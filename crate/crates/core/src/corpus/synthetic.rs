//! Topic-structured synthetic dialogues for offline, desk-scale runs.
//!
//! Each record draws two keywords from one topic. Contexts and positives
//! mention those keywords coherently; the five adversarial negatives reuse the
//! keywords inside sentences that do not follow from the context.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{alternating_context, Corpus, CorpusError, DialogueRecord, Source, Split};
use crate::seed::rng_for;

struct Topic {
    name: &'static str,
    keywords: &'static [&'static str],
}

const TOPICS: &[Topic] = &[
    Topic {
        name: "job",
        keywords: &[
            "interview", "manager", "salary", "resume", "promotion", "office", "contract",
            "colleague", "deadline", "meeting",
        ],
    },
    Topic {
        name: "travel",
        keywords: &[
            "flight", "passport", "hotel", "luggage", "airport", "ticket", "beach", "visa",
            "train", "museum",
        ],
    },
    Topic {
        name: "food",
        keywords: &[
            "restaurant", "recipe", "dinner", "pasta", "dessert", "waiter", "menu", "kitchen",
            "breakfast", "coffee",
        ],
    },
    Topic {
        name: "shopping",
        keywords: &[
            "discount", "price", "jacket", "receipt", "cashier", "refund", "shoes", "market",
            "bargain", "dress",
        ],
    },
    Topic {
        name: "health",
        keywords: &[
            "doctor", "fever", "medicine", "hospital", "headache", "appointment", "exercise",
            "diet", "nurse", "allergy",
        ],
    },
    Topic {
        name: "school",
        keywords: &[
            "exam", "teacher", "homework", "library", "lecture", "grade", "semester", "essay",
            "classmate", "professor",
        ],
    },
    Topic {
        name: "housing",
        keywords: &[
            "apartment", "landlord", "rent", "neighbor", "furniture", "garden", "lease",
            "kitchen", "balcony", "roommate",
        ],
    },
    Topic {
        name: "sports",
        keywords: &[
            "football", "match", "coach", "stadium", "tennis", "marathon", "team", "score",
            "trainer", "tournament",
        ],
    },
    Topic {
        name: "weather",
        keywords: &[
            "rain", "umbrella", "storm", "sunshine", "snow", "forecast", "temperature", "wind",
            "winter", "cloud",
        ],
    },
    Topic {
        name: "family",
        keywords: &[
            "sister", "wedding", "birthday", "parents", "grandmother", "cousin", "holiday",
            "gift", "brother", "anniversary",
        ],
    },
];

const OPENERS: &[&str] = &[
    "I have been worried about the {k1} and the {k2} all week.",
    "Do you know anything about the {k1}? I need help with the {k2}.",
    "Guess what happened with the {k1} and the {k2} today.",
    "I can't stop thinking about the {k1} and the {k2}.",
    "Have you heard the news about the {k1} and the {k2}?",
];

const MIDDLES: &[&str] = &[
    "Really? What is wrong with the {k1}?",
    "Tell me more, is it about the {k2}?",
    "Oh no, what did they say about the {k1}?",
    "That sounds serious. How is the {k2} going?",
];

const CLOSERS: &[&str] = &[
    "The {k2} is the real problem, honestly.",
    "I am not sure the {k1} will work out.",
    "Nobody told me anything about the {k2} yet.",
];

const POSITIVES: &[&str] = &[
    "Don't worry, I can help you sort out the {k1} and the {k2} tomorrow.",
    "Maybe you should ask someone about the {k2} before the {k1} gets worse.",
    "I went through the same {k1} problem last year, the {k2} was fine in the end.",
    "Let's make a plan for the {k2} first, then deal with the {k1}.",
    "You will handle the {k1} well, just prepare for the {k2} carefully.",
];

const ADVERSARIAL: &[&str] = &[
    "My {k1} was painted blue when I was a child.",
    "Yesterday a {k2} flew over the river near my uncle's farm.",
    "The {k1} in the movie reminded me of a song about the {k2}.",
    "I once wrote a poem called the {k2} for a contest.",
    "Can a {k1} really swim across the ocean?",
    "I have never seen a {k2} dance like that before.",
    "The {k1} is my favourite word in the dictionary.",
];

fn fill(template: &str, k1: &str, k2: &str) -> String {
    template.replace("{k1}", k1).replace("{k2}", k2)
}

#[derive(Debug, Clone, Copy)]
pub struct SyntheticOptions {
    pub records: usize,
    /// Share of records carrying five adversarial negatives.
    pub adversarial_share: f64,
    pub seed: u64,
    pub id_prefix: &'static str,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            records: 100,
            adversarial_share: 1.0,
            seed: 0,
            id_prefix: "syn",
        }
    }
}

pub fn synthetic_records(opts: &SyntheticOptions) -> Vec<DialogueRecord> {
    (0..opts.records)
        .map(|i| {
            let mut rng = rng_for(opts.seed, &format!("synthetic/{}/{i}", opts.id_prefix));
            let topic = TOPICS.choose(&mut rng).expect("topics non-empty");
            let picks: Vec<&&str> = topic.keywords.choose_multiple(&mut rng, 2).collect();
            let (k1, k2) = (*picks[0], *picks[1]);
            let mut turns = vec![
                fill(OPENERS.choose(&mut rng).unwrap(), k1, k2),
                fill(MIDDLES.choose(&mut rng).unwrap(), k1, k2),
            ];
            if rng.gen_bool(0.5) {
                turns.push(fill(CLOSERS.choose(&mut rng).unwrap(), k1, k2));
            }
            let positives: Vec<String> = POSITIVES
                .choose_multiple(&mut rng, 2)
                .map(|t| fill(t, k1, k2))
                .collect();
            let adversarial_negatives = if rng.gen_bool(opts.adversarial_share.clamp(0.0, 1.0)) {
                ADVERSARIAL
                    .choose_multiple(&mut rng, 5)
                    .map(|t| fill(t, k1, k2))
                    .collect()
            } else {
                Vec::new()
            };
            DialogueRecord {
                id: format!("{}-{}-{i:05}", opts.id_prefix, topic.name),
                context: alternating_context(&turns),
                persona: None,
                positives,
                adversarial_negatives,
                source: Source::Synthetic,
            }
        })
        .collect()
}

pub fn synthetic_corpus(split: Split, opts: &SyntheticOptions) -> Result<Corpus, CorpusError> {
    Corpus::new(split, synthetic_records(opts))
}
