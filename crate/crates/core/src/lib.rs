//! Adversarial negative response generation for dialogue response selection:
//! corpora, prompt construction, completion clients, negative samplers, a
//! listwise-trained response ranker and evaluation tooling.

pub mod corpus;
pub mod eval;
pub mod generator;
pub mod jsonl;
pub mod llm;
pub mod negatives;
pub mod prompt;
pub mod ranker;
pub mod seed;
pub mod text;
