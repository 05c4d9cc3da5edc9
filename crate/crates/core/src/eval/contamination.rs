use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{jaccard, pearson, spearman};
use crate::generator::GenerationResult;
use crate::text::{token_set, tokenize};

/// Overlap between demonstration negatives and generated responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationRow {
    pub k: usize,
    /// `"1/1"`, `"1/2"`, `"2/2"` or `"all"`.
    pub position: String,
    pub pairs: usize,
    pub jaccard: f64,
    /// `None` when a length series has zero variance.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Default)]
struct Pairs {
    jaccards: Vec<f64>,
    example_lengths: Vec<f64>,
    generated_lengths: Vec<f64>,
}

impl Pairs {
    fn add(&mut self, example: &str, generated: &str) {
        self.jaccards.push(jaccard(&token_set(example), &token_set(generated)));
        self.example_lengths.push(tokenize(example).len() as f64);
        self.generated_lengths.push(tokenize(generated).len() as f64);
    }

    fn row(&self, k: usize, position: String) -> ContaminationRow {
        ContaminationRow {
            k,
            position,
            pairs: self.jaccards.len(),
            jaccard: super::mean(&self.jaccards),
            pearson: pearson(&self.example_lengths, &self.generated_lengths).ok(),
            spearman: spearman(&self.example_lengths, &self.generated_lengths).ok(),
        }
    }
}

/// The i-th negative of each demonstration is paired with the i-th generated
/// response. k = 1 yields one row; k = 2 yields a row per position plus a
/// pooled row.
pub fn contamination_report(results: &[GenerationResult]) -> Vec<ContaminationRow> {
    let mut rows = Vec::new();
    for k in 1..=crate::prompt::MAX_EXAMPLES {
        let group: Vec<&GenerationResult> = results
            .iter()
            .filter(|r| r.demonstrations.len() == k)
            .collect();
        if group.is_empty() {
            continue;
        }
        let mut per_position: Vec<Pairs> = (0..k).map(|_| Pairs::default()).collect();
        let mut pooled = Pairs::default();
        for r in &group {
            for (pos, demo) in r.demonstrations.iter().enumerate() {
                for (ex, gen) in demo.iter().zip(&r.negatives) {
                    per_position[pos].add(ex, gen);
                    pooled.add(ex, gen);
                }
            }
        }
        for (pos, pairs) in per_position.iter().enumerate() {
            rows.push(pairs.row(k, format!("{}/{k}", pos + 1)));
        }
        if k > 1 {
            rows.push(pooled.row(k, "all".into()));
        }
    }
    rows
}

pub fn format_contamination_table(rows: &[ContaminationRow]) -> String {
    let fmt = |x: Option<f64>| x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>3} {:>8} {:>8} {:>10} {:>10}",
        "k", "pos/k", "Jaccard", "Pearson", "Spearman"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>3} {:>8} {:>8.3} {:>10} {:>10}",
            r.k,
            r.position,
            r.jaccard,
            fmt(r.pearson),
            fmt(r.spearman)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::InstructionType;

    fn result(demos: Vec<Vec<&str>>, negatives: Vec<&str>) -> GenerationResult {
        GenerationResult {
            target_id: "t".into(),
            negatives: negatives.into_iter().map(String::from).collect(),
            attempts: 1,
            prompts_used: vec![],
            ledger: vec![],
            instruction: InstructionType::Direct,
            k: demos.len(),
            example_ids: vec![],
            demonstrations: demos
                .into_iter()
                .map(|d| d.into_iter().map(String::from).collect())
                .collect(),
        }
    }

    #[test]
    fn copied_lengths_correlate_perfectly() {
        let demo = vec!["a", "b c", "d e f", "g h i j", "k l m n o"];
        let gen = vec!["p", "q r", "s t u", "v w x y", "z z z z z"];
        let rows = contamination_report(&[result(vec![demo], gen)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].position, "1/1");
        assert!((rows[0].pearson.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rows[0].jaccard, 0.0);
    }

    #[test]
    fn fixed_length_outputs_are_undefined() {
        let demo = vec!["a", "b c", "d e f", "g h i j", "k l m n o"];
        let gen = vec!["x y"; 5];
        let rows = contamination_report(&[result(vec![demo], gen)]);
        assert_eq!(rows[0].pearson, None);
        assert!(format_contamination_table(&rows).contains("undefined"));
    }

    #[test]
    fn k2_rows() {
        let d = vec!["a b", "c", "d e f", "g", "h i"];
        let rows = contamination_report(&[result(vec![d.clone(), d.clone()], d)]);
        let positions: Vec<&str> = rows.iter().map(|r| r.position.as_str()).collect();
        assert_eq!(positions, ["1/2", "2/2", "all"]);
        assert_eq!(rows[2].pairs, 10);
        assert_eq!(rows[0].jaccard, 1.0);
    }
}
