use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;

use super::partition::{partition_budgets, random_partitions};
use super::{check_budget, QueryResult};
use crate::error::{Error, Result};
use crate::linear::{argmax, LinearHead};
use crate::matrix::FeatureMatrix;
use crate::pool::PoolState;
use crate::rng::StreamRng;

/// Gradient of the cross-entropy at the predicted label with respect to
/// the weight matrix, flattened row-major (`C * d` entries).
pub fn badge_embedding(head: &LinearHead, x: &[f32]) -> Result<Vec<f64>> {
    let mut z = head.logits(x)?;
    let y = argmax(&z);
    let max = z[y];
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let d = x.len();
    let mut out = vec![0.0; z.len() * d];
    for (c, &e) in z.iter().enumerate() {
        let g = e / total - if c == y { 1.0 } else { 0.0 };
        for (o, &v) in out[c * d..(c + 1) * d].iter_mut().zip(x) {
            *o = g * f64::from(v);
        }
    }
    Ok(out)
}

/// Averages `pooled_dim` contiguous windows of width `ceil(len / pooled_dim)`;
/// the last window may be short and windows past the end are zero.
pub fn average_pool(v: &[f64], pooled_dim: usize) -> Result<Vec<f64>> {
    if pooled_dim == 0 || pooled_dim > v.len() {
        return Err(Error::Shape(format!(
            "cannot pool {} values into {pooled_dim} windows",
            v.len()
        )));
    }
    let width = v.len().div_ceil(pooled_dim);
    Ok((0..pooled_dim)
        .map(|j| {
            let start = (j * width).min(v.len());
            let window = &v[start..((j + 1) * width).min(v.len())];
            if window.is_empty() {
                0.0
            } else {
                window.iter().sum::<f64>() / window.len() as f64
            }
        })
        .collect())
}

/// k-means++ seeding over the rows of `points` (`dim` values per row).
/// The first center is uniform; each next one is drawn with probability
/// proportional to its squared distance to the nearest chosen center, or
/// uniformly among the rest once every such distance is zero.
pub fn kmeanspp_seed(points: &[f64], dim: usize, b: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Shape(format!("{} values do not form rows of {dim}", points.len())));
    }
    let n = points.len() / dim;
    if b > n {
        return Err(Error::Budget(format!("cannot seed {b} centers from {n} points")));
    }
    let mut chosen = Vec::with_capacity(b);
    if b == 0 {
        return Ok(chosen);
    }
    let mut taken = vec![false; n];
    let mut d2 = vec![f64::INFINITY; n];
    let mut next = rng.random_range(0..n);
    loop {
        chosen.push(next);
        taken[next] = true;
        if chosen.len() == b {
            return Ok(chosen);
        }
        let center = &points[next * dim..(next + 1) * dim];
        d2.par_iter_mut().zip(points.par_chunks(dim)).for_each(|(m, row)| {
            let d: f64 = row.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
            if d < *m {
                *m = d;
            }
        });
        for (k, &t) in taken.iter().enumerate() {
            if t {
                d2[k] = 0.0;
            }
        }
        next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            Err(_) => {
                let rest: Vec<usize> = (0..n).filter(|&k| !taken[k]).collect();
                rest[rng.random_range(0..rest.len())]
            }
        };
    }
}

fn embeddings(head: &LinearHead, features: &FeatureMatrix, rows: &[usize], pooled_dim: Option<usize>) -> Result<Vec<f64>> {
    if features.dim() != head.dim() {
        return Err(Error::Shape(format!(
            "feature dimension {} does not match head dimension {}",
            features.dim(),
            head.dim()
        )));
    }
    let per_row: Result<Vec<Vec<f64>>> = rows
        .par_iter()
        .map(|&i| {
            let e = badge_embedding(head, features.row(i))?;
            match pooled_dim {
                Some(k) => average_pool(&e, k),
                None => Ok(e),
            }
        })
        .collect();
    Ok(per_row?.concat())
}

fn seed_rows(
    head: &LinearHead,
    features: &FeatureMatrix,
    rows: &[usize],
    b: usize,
    pooled_dim: Option<usize>,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    if b == 0 {
        return Ok(Vec::new());
    }
    let dim = pooled_dim.unwrap_or(head.num_classes() * head.dim());
    let emb = embeddings(head, features, rows, pooled_dim)?;
    Ok(kmeanspp_seed(&emb, dim, b, rng)?.into_iter().map(|k| rows[k]).collect())
}

/// k-means++ seeding on the gradient embeddings of all unlabeled points.
pub fn badge_select(
    pool: &PoolState,
    head: &LinearHead,
    features: &FeatureMatrix,
    b: usize,
    rng: &mut StreamRng,
) -> Result<QueryResult> {
    check_budget(pool, b)?;
    let indices = seed_rows(head, features, pool.unlabeled(), b, None, rng)?;
    Ok(QueryResult::new("badge", indices))
}

/// BADGE inside `p` random partitions, on embeddings average-pooled to
/// `pooled_dim` values.
pub fn partitioned_badge_select(
    pool: &PoolState,
    head: &LinearHead,
    features: &FeatureMatrix,
    b: usize,
    p: usize,
    pooled_dim: usize,
    rng: &mut StreamRng,
) -> Result<QueryResult> {
    check_budget(pool, b)?;
    let full = head.num_classes() * head.dim();
    if pooled_dim == 0 || pooled_dim > full {
        return Err(Error::Config(format!(
            "pooled_dim {pooled_dim} must lie in 1..={full} (classes x feature dimension)"
        )));
    }
    let parts = random_partitions(pool.unlabeled(), pool.labeled(), p, rng)?;
    let sizes: Vec<usize> = parts.iter().map(|part| part.unlabeled.len()).collect();
    let budgets = partition_budgets(&sizes, b)?;
    let mut indices = Vec::with_capacity(b);
    for (part, budget) in parts.iter().zip(budgets) {
        indices.extend(seed_rows(head, features, &part.unlabeled, budget, Some(pooled_dim), rng)?);
    }
    Ok(QueryResult::new("partitioned_badge", indices))
}
