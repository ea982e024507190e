use rayon::prelude::*;

use super::{bottom_b, check_budget, QueryResult};
use crate::error::{Error, Result};
use crate::linear::LinearHead;
use crate::matrix::{squared_distance_f64, FeatureMatrix};
use crate::pool::PoolState;

/// Class-balancing sampler.
///
/// Each pick targets the class with the fewest labels so far (counting
/// earlier picks of this batch under their target class, ties to the
/// smaller class) and takes the unlabeled point minimizing
/// `||x - mu_t|| - min_{c != t} ||x - mu_c||` over labeled centroids `mu`.
/// Classes without labeled examples are never targeted or compared against.
pub fn balancing_select(pool: &PoolState, head: &LinearHead, features: &FeatureMatrix, b: usize) -> Result<QueryResult> {
    check_budget(pool, b)?;
    if features.dim() != head.dim() {
        return Err(Error::Shape(format!(
            "feature dimension {} does not match head dimension {}",
            features.dim(),
            head.dim()
        )));
    }
    if pool.labeled().is_empty() {
        return Err(Error::Initialization("balancing needs at least one labeled point".into()));
    }
    let d = features.dim();
    let num_classes = pool.num_classes();
    let mut counts = vec![0u64; num_classes];
    let mut sums = vec![0.0f64; num_classes * d];
    for (&i, y) in pool.labeled().iter().zip(pool.labeled_labels()) {
        let y = y as usize;
        counts[y] += 1;
        for (s, &v) in sums[y * d..(y + 1) * d].iter_mut().zip(features.row(i)) {
            *s += f64::from(v);
        }
    }
    let present: Vec<usize> = (0..num_classes).filter(|&c| counts[c] > 0).collect();
    let centroids: Vec<Vec<f64>> = present
        .iter()
        .map(|&c| sums[c * d..(c + 1) * d].iter().map(|s| s / counts[c] as f64).collect())
        .collect();

    // distances to each present centroid, one row per unlabeled point
    let unlabeled = pool.unlabeled();
    let dist: Vec<Vec<f64>> = unlabeled
        .par_iter()
        .map(|&i| {
            let x = features.row(i);
            centroids.iter().map(|mu| squared_distance_f64(x, mu).sqrt()).collect()
        })
        .collect();

    // the centroids stay fixed within a batch, so each target's order is
    // computed once and consumed with a cursor
    let mut orders: Vec<Option<(Vec<(f64, usize)>, usize)>> = vec![None; present.len()];
    let mut taken = vec![false; pool.n_total()];
    let mut indices = Vec::with_capacity(b);
    let mut scores = Vec::with_capacity(b);
    let mut targets = Vec::with_capacity(b);
    while indices.len() < b {
        let t = (0..present.len()).min_by_key(|&k| (counts[present[k]], k)).expect("a class is present");
        let (order, cursor) = orders[t].get_or_insert_with(|| {
            let scored = dist
                .iter()
                .zip(unlabeled)
                .map(|(row, &i)| {
                    let other = (0..row.len())
                        .filter(|&k| k != t)
                        .map(|k| row[k])
                        .fold(f64::INFINITY, f64::min);
                    let other = if other.is_finite() { other } else { 0.0 };
                    (row[t] - other, i)
                })
                .collect();
            (bottom_b(scored, b), 0)
        });
        while taken[order[*cursor].1] {
            *cursor += 1;
        }
        let (score, i) = order[*cursor];
        taken[i] = true;
        indices.push(i);
        scores.push(score);
        targets.push(present[t] as u32);
        counts[present[t]] += 1;
    }
    let mut q = QueryResult::new("balancing", indices).with_scores(scores);
    q.target_classes = Some(targets);
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_traced_six_points() {
        // class 0 labeled at 0, class 1 labeled at 10 and 12
        let values = [0.0f32, 10.0, 12.0, 3.0, 6.0, 9.0, 100.0];
        let x = FeatureMatrix::from_rows(&values.iter().map(|&v| [v]).collect::<Vec<_>>()).unwrap();
        let labels = vec![0, 1, 1, 0, 1, 1, 0];
        let mut pool = PoolState::with_splits(labels, 2, &[6], &[]).unwrap();
        pool.restore(&[0, 1, 2], 3, 0).unwrap();
        let head = LinearHead::zeros(2, 1).unwrap();
        // mu0 = 0, mu1 = 11: scores 3-8=-5, 6-5=1, 9-2=7
        let q = balancing_select(&pool, &head, &x, 1).unwrap();
        assert_eq!(q.indices, vec![3]);
        assert_eq!(q.scores, Some(vec![-5.0]));
        // the pseudo-count ties the classes, so class 0 again, then class 1
        let q = balancing_select(&pool, &head, &x, 3).unwrap();
        assert_eq!(q.indices, vec![3, 4, 5]);
        assert_eq!(q.target_classes, Some(vec![0, 0, 1]));
        assert!(pool.audit_log().is_empty());
    }

    #[test]
    fn balanced_counts_target_class_zero() {
        let x = FeatureMatrix::from_rows(&[[0.0f32], [4.0], [1.0], [3.0], [9.0]]).unwrap();
        let mut pool = PoolState::with_splits(vec![0, 1, 0, 1, 0], 2, &[4], &[]).unwrap();
        pool.restore(&[0, 1], 2, 0).unwrap();
        let q = balancing_select(&pool, &LinearHead::zeros(2, 1).unwrap(), &x, 2).unwrap();
        assert_eq!(q.indices, vec![2, 3]);
        assert_eq!(q.target_classes, Some(vec![0, 1]));
    }

    #[test]
    fn requires_labels() {
        let x = FeatureMatrix::from_rows(&[[0.0f32], [1.0], [2.0]]).unwrap();
        let mut pool = PoolState::with_splits(vec![0, 1, 0], 2, &[2], &[]).unwrap();
        pool.seed_initial(0, 0).unwrap();
        let err = balancing_select(&pool, &LinearHead::zeros(2, 1).unwrap(), &x, 1).unwrap_err();
        assert!(matches!(err, Error::Initialization(_)));
    }
}
