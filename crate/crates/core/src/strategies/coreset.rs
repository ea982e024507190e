use rand::Rng;
use rayon::prelude::*;

use super::partition::{partition_budgets, random_partitions};
use super::{check_budget, from_scored, QueryResult};
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, FeatureMatrix};
use crate::pool::PoolState;
use crate::rng::StreamRng;

/// Greedy k-center over `candidates` (sorted ascending), starting from
/// `centers`. Returns `(distance to nearest center at pick time, index)`.
///
/// With no centers the first pick is uniform from `rng` (score `inf`), or
/// an error when no stream is given.
pub(crate) fn kcenter_greedy(
    features: &FeatureMatrix,
    centers: &[usize],
    candidates: &[usize],
    b: usize,
    rng: Option<&mut StreamRng>,
) -> Result<Vec<(f64, usize)>> {
    let mut picked = Vec::with_capacity(b);
    if b == 0 {
        return Ok(picked);
    }
    let mut nearest: Vec<f64> = candidates
        .par_iter()
        .map(|&i| {
            let x = features.row(i);
            centers
                .iter()
                .map(|&c| squared_distance(x, features.row(c)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    if centers.is_empty() {
        let rng = rng.ok_or_else(|| Error::Initialization("k-center needs at least one labeled point".into()))?;
        let k = rng.random_range(0..candidates.len());
        picked.push((f64::INFINITY, candidates[k]));
        absorb(features, candidates, &mut nearest, k);
    }
    while picked.len() < b {
        let mut best = 0;
        for (k, &d) in nearest.iter().enumerate() {
            if d > nearest[best] {
                best = k;
            }
        }
        picked.push((nearest[best].sqrt(), candidates[best]));
        absorb(features, candidates, &mut nearest, best);
    }
    Ok(picked)
}

/// Makes `candidates[k]` a center.
fn absorb(features: &FeatureMatrix, candidates: &[usize], nearest: &mut [f64], k: usize) {
    let center = features.row(candidates[k]);
    nearest.par_iter_mut().zip(candidates.par_iter()).for_each(|(m, &i)| {
        let d = squared_distance(features.row(i), center);
        if d < *m {
            *m = d;
        }
    });
    nearest[k] = f64::NEG_INFINITY;
}

/// Greedy k-center with the labeled set as initial centers.
pub fn coreset_select(pool: &PoolState, features: &FeatureMatrix, b: usize) -> Result<QueryResult> {
    check_budget(pool, b)?;
    if pool.labeled().is_empty() {
        return Err(Error::Initialization("coreset needs at least one labeled point".into()));
    }
    let picked = kcenter_greedy(features, pool.labeled(), pool.unlabeled(), b, None)?;
    Ok(from_scored("coreset", picked))
}

/// k-center run separately inside `p` random partitions of the pool.
pub fn partitioned_coreset_select(
    pool: &PoolState,
    features: &FeatureMatrix,
    b: usize,
    p: usize,
    rng: &mut StreamRng,
) -> Result<QueryResult> {
    check_budget(pool, b)?;
    let parts = random_partitions(pool.unlabeled(), pool.labeled(), p, rng)?;
    let sizes: Vec<usize> = parts.iter().map(|part| part.unlabeled.len()).collect();
    let budgets = partition_budgets(&sizes, b)?;
    let mut picked = Vec::with_capacity(b);
    for (part, budget) in parts.iter().zip(budgets) {
        picked.extend(kcenter_greedy(features, &part.labeled, &part.unlabeled, budget, Some(&mut *rng))?);
    }
    Ok(from_scored("partitioned_coreset", picked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn line(values: &[f32]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&values.iter().map(|&v| [v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn hand_traced_greedy() {
        // features {0, 10, 4}, labeled {0}; index 3 is validation
        let x = line(&[0.0, 10.0, 4.0, 0.0]);
        let mut pool = PoolState::with_splits(vec![0; 4], 1, &[3], &[]).unwrap();
        pool.restore(&[0], 1, 0).unwrap();
        let q = coreset_select(&pool, &x, 2).unwrap();
        assert_eq!(q.indices, vec![1, 2]);
        assert_eq!(q.scores, Some(vec![10.0, 4.0]));
    }

    #[test]
    fn ties_and_duplicates() {
        let x = line(&[0.0, 5.0, -5.0, 5.0, 0.0]);
        let mut pool = PoolState::with_splits(vec![0; 5], 1, &[4], &[]).unwrap();
        pool.restore(&[0], 1, 0).unwrap();
        let q = coreset_select(&pool, &x, 3).unwrap();
        assert_eq!(q.indices, vec![1, 2, 3]);
    }

    #[test]
    fn empty_labeled_set() {
        let x = line(&[0.0, 1.0, 2.0]);
        let mut pool = PoolState::with_splits(vec![0; 3], 1, &[2], &[]).unwrap();
        pool.seed_initial(0, 0).unwrap();
        assert!(matches!(coreset_select(&pool, &x, 1), Err(Error::Initialization(_))));
        // a partition without labeled points starts from a random pick
        let q = partitioned_coreset_select(&pool, &x, 2, 1, &mut stream(0, "s")).unwrap();
        let mut got = q.indices.clone();
        got.sort_unstable();
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn single_partition_matches_plain() {
        let values: Vec<f32> = (0..40).map(|i| ((i * 37) % 23) as f32 * 0.7).collect();
        let x = line(&values);
        let mut pool = PoolState::with_splits(vec![0; 40], 1, &[39], &[]).unwrap();
        pool.seed_initial(3, 1).unwrap();
        let plain = coreset_select(&pool, &x, 6).unwrap();
        let part = partitioned_coreset_select(&pool, &x, 6, 1, &mut stream(2, "s")).unwrap();
        assert_eq!(plain.indices, part.indices);
        let q = partitioned_coreset_select(&pool, &x, 10, 3, &mut stream(2, "s")).unwrap();
        assert_eq!(q.indices.len(), 10);
    }
}
