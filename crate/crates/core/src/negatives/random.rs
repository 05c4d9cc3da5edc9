use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use super::NegativesError;
use crate::corpus::ResponsePool;
use crate::seed::rng_for;

/// Draw `n` distinct responses uniformly without replacement, skipping `exclude`.
pub fn sample_random(
    pool: &ResponsePool,
    exclude: &HashSet<&str>,
    n: usize,
    seed: u64,
) -> Result<Vec<String>, NegativesError> {
    let mut rng = rng_for(seed, "sample_random");
    sample_random_with(pool, exclude, n, &mut rng)
}

pub fn sample_random_with<R: Rng + ?Sized>(
    pool: &ResponsePool,
    exclude: &HashSet<&str>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<String>, NegativesError> {
    let excluded_in_pool = exclude.iter().filter(|e| pool.contains(e)).count();
    let eligible = pool.len() - excluded_in_pool;
    if eligible < n {
        return Err(NegativesError::PoolTooSmall {
            eligible,
            needed: n,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // Sparse draw: rejection over the whole pool is exact and avoids a scan.
    if n.saturating_mul(4) <= eligible {
        let mut chosen: Vec<usize> = Vec::with_capacity(n);
        while chosen.len() < n {
            let i = rng.gen_range(0..pool.len());
            let text = pool.get(i).expect("index in range");
            if exclude.contains(text) || chosen.contains(&i) {
                continue;
            }
            chosen.push(i);
        }
        return Ok(chosen
            .into_iter()
            .map(|i| pool.get(i).expect("index in range").to_owned())
            .collect());
    }

    let candidates: Vec<&String> = pool
        .texts()
        .iter()
        .filter(|t| !exclude.contains(t.as_str()))
        .collect();
    Ok(index::sample(rng, candidates.len(), n)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect())
}
