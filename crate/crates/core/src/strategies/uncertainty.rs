use rayon::prelude::*;

use super::{bottom_b, check_budget, from_scored, QueryResult};
use crate::error::{Error, Result};
use crate::linear::LinearHead;
use crate::matrix::FeatureMatrix;
use crate::pool::PoolState;

fn scored_unlabeled(
    pool: &PoolState,
    head: &LinearHead,
    features: &FeatureMatrix,
    score: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<Vec<(f64, usize)>> {
    if features.dim() != head.dim() {
        return Err(Error::Shape(format!(
            "feature dimension {} does not match head dimension {}",
            features.dim(),
            head.dim()
        )));
    }
    let c = head.num_classes();
    Ok(pool
        .unlabeled()
        .par_chunks(4096)
        .flat_map_iter(|chunk| {
            let mut z = vec![0.0; c];
            chunk
                .iter()
                .map(|&i| {
                    head.logits_into(features.row(i), &mut z);
                    (score(&z), i)
                })
                .collect::<Vec<_>>()
        })
        .collect())
}

/// Least confidence: the `b` unlabeled points with the smallest top logit.
pub fn confidence_select(pool: &PoolState, head: &LinearHead, features: &FeatureMatrix, b: usize) -> Result<QueryResult> {
    check_budget(pool, b)?;
    let scored = scored_unlabeled(pool, head, features, |z| {
        z.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    })?;
    Ok(from_scored("confidence", bottom_b(scored, b)))
}

/// The `b` unlabeled points with the smallest gap between the two largest logits.
pub fn margin_select(pool: &PoolState, head: &LinearHead, features: &FeatureMatrix, b: usize) -> Result<QueryResult> {
    check_budget(pool, b)?;
    let scored = scored_unlabeled(pool, head, features, top_two_gap)?;
    Ok(from_scored("margin", bottom_b(scored, b)))
}

fn top_two_gap(z: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in z {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    if second == f64::NEG_INFINITY {
        // single class
        0.0
    } else {
        first - second
    }
}
