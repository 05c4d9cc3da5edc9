use advneg_core::eval::{
    bootstrap_mean_difference, mean_reciprocal_rank, rank_of_positive, recall_at_1, spearman,
    RankingOutcome,
};
use proptest::prelude::*;

fn outcome(scores: Vec<f64>, positive_index: usize) -> RankingOutcome {
    RankingOutcome {
        context_id: "c".into(),
        rank: rank_of_positive(&scores, positive_index),
        scores,
        positive_index,
    }
}

#[test]
fn mrr_of_ranks_one_two_four() {
    let outcomes: Vec<RankingOutcome> = [1usize, 2, 4]
        .iter()
        .map(|&r| {
            // positive at index 0, r - 1 candidates strictly above it
            let scores = (0..6).map(|j| if j == 0 { 0.0 } else if j < r { 1.0 } else { -1.0 }).collect();
            outcome(scores, 0)
        })
        .collect();
    assert_eq!(outcomes.iter().map(|o| o.rank).collect::<Vec<_>>(), [1, 2, 4]);
    assert!((mean_reciprocal_rank(&outcomes).unwrap() - 0.583333333333).abs() < 1e-9);
    assert!((recall_at_1(&outcomes).unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn zero_model_ties_are_pessimistic() {
    let outcomes: Vec<RankingOutcome> = (0..6).map(|p| outcome(vec![0.0; 6], p)).collect();
    assert_eq!(recall_at_1(&outcomes).unwrap(), 0.0);
    assert!((mean_reciprocal_rank(&outcomes).unwrap() - 1.0 / 6.0).abs() < 1e-12);
}

#[test]
fn bootstrap_separates_shifted_groups() {
    let a: Vec<f64> = (0..200).map(|i| 0.6 + (i % 10) as f64 * 0.01).collect();
    let b: Vec<f64> = (0..200).map(|i| 0.4 + (i % 10) as f64 * 0.01).collect();
    let ci = bootstrap_mean_difference(&a, &b, 1000, 0.95, 3).unwrap();
    assert!(ci.strictly_positive());
    assert!(!bootstrap_mean_difference(&b, &a, 1000, 0.95, 3).unwrap().strictly_positive());
}

proptest! {
    #[test]
    fn recall_never_exceeds_mrr(
        rows in prop::collection::vec((prop::collection::vec(-3i32..3, 6), 0usize..6), 1..40)
    ) {
        let outcomes: Vec<RankingOutcome> = rows
            .into_iter()
            .map(|(s, p)| outcome(s.into_iter().map(f64::from).collect(), p))
            .collect();
        let r1 = recall_at_1(&outcomes).unwrap();
        let mrr = mean_reciprocal_rank(&outcomes).unwrap();
        prop_assert!(r1 <= mrr + 1e-12);
        prop_assert!(mrr <= 1.0 && mrr >= 1.0 / 6.0);
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        xs in prop::collection::vec(-100.0f64..100.0, 3..30),
        ys_seed in prop::collection::vec(-100.0f64..100.0, 30),
    ) {
        let ys = &ys_seed[..xs.len()];
        let Ok(base) = spearman(&xs, ys) else { return Ok(()); };
        let warped: Vec<f64> = xs.iter().map(|x| x.powi(3) + x).collect();
        let again = spearman(&warped, ys).unwrap();
        prop_assert!((base - again).abs() < 1e-9);
    }
}
