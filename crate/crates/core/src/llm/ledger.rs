use serde::{Deserialize, Serialize};

use super::CompletionResult;

/// Append-only record of completed requests. Aggregates are always recomputed
/// from the records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageLedger {
    records: Vec<CompletionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub requests: usize,
    pub estimated_usage_requests: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub mean_tokens: f64,
    pub mean_latency_secs: f64,
    pub total_cost: f64,
}

impl UsageLedger {
    pub fn push(&mut self, result: CompletionResult) {
        self.records.push(result);
    }

    pub fn extend(&mut self, results: impl IntoIterator<Item = CompletionResult>) {
        self.records.extend(results);
    }

    pub fn records(&self) -> &[CompletionResult] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.records.iter().map(CompletionResult::total_tokens).sum()
    }

    pub fn summary(&self) -> LedgerSummary {
        let n = self.records.len();
        let mean = |total: f64| if n == 0 { 0.0 } else { total / n as f64 };
        LedgerSummary {
            requests: n,
            estimated_usage_requests: self.records.iter().filter(|r| r.usage_estimated).count(),
            prompt_tokens: self.records.iter().map(|r| r.prompt_tokens).sum(),
            completion_tokens: self.records.iter().map(|r| r.completion_tokens).sum(),
            mean_tokens: mean(self.total_tokens() as f64),
            mean_latency_secs: mean(ordered_sum(self.records.iter().map(|r| r.latency_secs))),
            total_cost: ordered_sum(self.records.iter().map(|r| r.estimated_cost)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub total_tokens: u64,
    pub total_cost: f64,
    pub per_record_cost: f64,
}

/// Records arrive in completion order under concurrency; summing sorted
/// values keeps the float total independent of that order.
fn ordered_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// total tokens / 1000 × price, with the per-request average alongside.
pub fn estimate_cost(ledger: &UsageLedger, price_per_1k_tokens: f64) -> CostEstimate {
    if ledger.is_empty() {
        log::warn!("cost estimate over an empty ledger");
        return CostEstimate {
            total_tokens: 0,
            total_cost: 0.0,
            per_record_cost: 0.0,
        };
    }
    let total_tokens = ledger.total_tokens();
    let total_cost = total_tokens as f64 / 1000.0 * price_per_1k_tokens;
    CostEstimate {
        total_tokens,
        total_cost,
        per_record_cost: total_cost / ledger.len() as f64,
    }
}
