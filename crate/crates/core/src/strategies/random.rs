use rand::seq::index;
use rand::Rng;

use super::{check_budget, QueryResult};
use crate::error::Result;
use crate::pool::PoolState;
use crate::rng::StreamRng;

/// `b` unlabeled indices drawn uniformly without replacement.
pub fn random_select(pool: &PoolState, b: usize, rng: &mut StreamRng) -> Result<QueryResult> {
    check_budget(pool, b)?;
    let unlabeled = pool.unlabeled();
    let indices = index::sample(rng, unlabeled.len(), b)
        .into_iter()
        .map(|k| unlabeled[k])
        .collect();
    Ok(QueryResult::new("random", indices))
}

/// Visits classes round-robin in index order, drawing one uniform unlabeled
/// example of the visited class each time and skipping exhausted classes.
///
/// Reads ground-truth labels of unlabeled points through the audited
/// accessor; it is an analysis baseline, not a deployable strategy.
pub fn balanced_random_select(pool: &PoolState, b: usize, rng: &mut StreamRng) -> Result<QueryResult> {
    check_budget(pool, b)?;
    let truth = pool.privileged_labels("balanced_random");
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); pool.num_classes()];
    for &i in pool.unlabeled() {
        buckets[truth[i] as usize].push(i);
    }
    let mut indices = Vec::with_capacity(b);
    let mut targets = Vec::with_capacity(b);
    while indices.len() < b {
        for (c, bucket) in buckets.iter_mut().enumerate() {
            if indices.len() == b {
                break;
            }
            if bucket.is_empty() {
                continue;
            }
            let k = rng.random_range(0..bucket.len());
            // keep the remaining bucket in index order
            indices.push(bucket.remove(k));
            targets.push(c as u32);
        }
    }
    let mut q = QueryResult::new("balanced_random", indices);
    q.target_classes = Some(targets);
    Ok(q)
}
