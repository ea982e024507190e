//! Feature-space distances from samples to the decision boundaries of a
//! linear head.
//!
//! For a linear head the region where class `p` wins is an intersection of
//! half-spaces `{x : z_p(x) >= z_j(x)}`, so the smallest perturbation that
//! changes the prediction is the distance to the nearest pairwise hyperplane
//! `|z_p - z_j| / ||W_p - W_j||`.
//!
//! * `ddb(x)`: minimum over `j != f(x)` of that pairwise distance.
//! * `dcsdb(x, c)`: `ddb(x)` when `f(x) = c`, otherwise the distance to the
//!   single hyperplane between `f(x)` and `c`. The latter lower-bounds the
//!   true distance to the region where `c` wins.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linear::{argmax, LinearHead};
use crate::matrix::FeatureMatrix;

static WARNED_IDENTICAL: AtomicBool = AtomicBool::new(false);

/// Rows handed to one rayon task.
const CHUNK_ROWS: usize = 4096;

/// `|(W_i - W_j) . x + (b_i - b_j)| / ||W_i - W_j||`.
///
/// Identical weight rows give `+inf` when the biases differ (the classes
/// never tie) and `0` when they do not (the classes are indistinguishable).
pub fn pairwise_boundary_distance(head: &LinearHead, x: &[f32], i: usize, j: usize) -> Result<f64> {
    let c = head.num_classes();
    if i >= c || j >= c || i == j {
        return Err(Error::Shape(format!("need two distinct classes below {c}, got {i} and {j}")));
    }
    if x.len() != head.dim() {
        return Err(Error::Shape(format!("feature dimension {} does not match head dimension {}", x.len(), head.dim())));
    }
    let (wi, wj) = (head.weight_row(i), head.weight_row(j));
    let mut num = head.bias()[i] - head.bias()[j];
    let mut norm_sq = 0.0;
    for ((&a, &b), &xk) in wi.iter().zip(wj).zip(x) {
        let diff = a - b;
        num += diff * f64::from(xk);
        norm_sq += diff * diff;
    }
    Ok(hyperplane_distance(num, norm_sq.sqrt(), head.bias()[i] != head.bias()[j]))
}

#[inline]
fn hyperplane_distance(numerator: f64, norm: f64, biases_differ: bool) -> f64 {
    if norm > 0.0 {
        numerator.abs() / norm
    } else if biases_differ {
        f64::INFINITY
    } else {
        if !WARNED_IDENTICAL.swap(true, Ordering::Relaxed) {
            log::warn!("two classes share identical weights and bias; their boundary distance is 0");
        }
        0.0
    }
}

/// Caches `||W_p - W_j||` for every `j`, per predicted class `p` actually
/// seen, so only the rows that are needed get computed.
pub struct BoundaryScorer<'h> {
    head: &'h LinearHead,
    norms: Vec<OnceLock<Vec<f64>>>,
}

impl<'h> BoundaryScorer<'h> {
    pub fn new(head: &'h LinearHead) -> Self {
        Self {
            head,
            norms: (0..head.num_classes()).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn head(&self) -> &LinearHead {
        self.head
    }

    fn norm_row(&self, p: usize) -> &[f64] {
        self.norms[p].get_or_init(|| {
            let wp = self.head.weight_row(p);
            (0..self.head.num_classes())
                .map(|j| {
                    let wj = self.head.weight_row(j);
                    wp.iter().zip(wj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                })
                .collect()
        })
    }

    /// Scores one row. Returns the predicted class `p`; on return
    /// `dists[j]` holds the `p`/`j` hyperplane distance for `j != p` and
    /// `dists[p]` holds `ddb`. `logits` and `dists` must have length `C`.
    #[inline]
    pub fn score_row(&self, x: &[f32], logits: &mut [f64], dists: &mut [f64]) -> usize {
        self.head.logits_into(x, logits);
        let p = argmax(logits);
        let norms = self.norm_row(p);
        let bias = self.head.bias();
        let mut ddb = f64::INFINITY;
        for j in 0..logits.len() {
            if j == p {
                continue;
            }
            let d = hyperplane_distance(logits[p] - logits[j], norms[j], bias[p] != bias[j]);
            dists[j] = d;
            if d < ddb {
                ddb = d;
            }
        }
        // a single-class head has no boundary
        dists[p] = ddb;
        p
    }

    fn check(&self, features: &FeatureMatrix) -> Result<()> {
        if features.dim() != self.head.dim() {
            return Err(Error::Shape(format!(
                "feature dimension {} does not match head dimension {}",
                features.dim(),
                self.head.dim()
            )));
        }
        Ok(())
    }

    /// Full scores for the given rows, computed in parallel; the output is
    /// independent of how rows are split across workers.
    pub fn scores(&self, features: &FeatureMatrix, rows: &[usize]) -> Result<BoundaryScores> {
        self.check(features)?;
        let c = self.head.num_classes();
        let parts: Vec<(Vec<u32>, Vec<f64>)> = rows
            .par_chunks(CHUNK_ROWS)
            .map(|chunk| {
                let mut z = vec![0.0; c];
                let mut preds = Vec::with_capacity(chunk.len());
                let mut dcsdb = vec![0.0; chunk.len() * c];
                for (r, &i) in chunk.iter().enumerate() {
                    let p = self.score_row(features.row(i), &mut z, &mut dcsdb[r * c..(r + 1) * c]);
                    preds.push(p as u32);
                }
                (preds, dcsdb)
            })
            .collect();
        let mut predictions = Vec::with_capacity(rows.len());
        let mut dcsdb = Vec::with_capacity(rows.len() * c);
        for (p, d) in parts {
            predictions.extend(p);
            dcsdb.extend(d);
        }
        let ddb = predictions
            .iter()
            .enumerate()
            .map(|(r, &p)| dcsdb[r * c + p as usize])
            .collect();
        Ok(BoundaryScores {
            num_classes: c,
            predictions,
            ddb,
            dcsdb,
        })
    }

    /// `ddb` only, without materializing the `n x C` matrix.
    pub fn ddb_rows(&self, features: &FeatureMatrix, rows: &[usize]) -> Result<Vec<f64>> {
        self.check(features)?;
        let c = self.head.num_classes();
        Ok(rows
            .par_chunks(CHUNK_ROWS)
            .flat_map_iter(|chunk| {
                let mut z = vec![0.0; c];
                let mut d = vec![0.0; c];
                chunk
                    .iter()
                    .map(|&i| {
                        let p = self.score_row(features.row(i), &mut z, &mut d);
                        d[p]
                    })
                    .collect::<Vec<_>>()
            })
            .collect())
    }
}

/// Boundary distances of a set of rows, in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryScores {
    pub num_classes: usize,
    pub predictions: Vec<u32>,
    pub ddb: Vec<f64>,
    /// `rows x C`, row-major.
    pub dcsdb: Vec<f64>,
}

impl BoundaryScores {
    pub fn dcsdb_row(&self, r: usize) -> &[f64] {
        &self.dcsdb[r * self.num_classes..(r + 1) * self.num_classes]
    }

    pub fn dcsdb_column(&self, c: usize) -> Vec<f64> {
        self.dcsdb.iter().skip(c).step_by(self.num_classes).copied().collect()
    }
}

/// Distance to the nearest decision boundary for every row of `features`.
pub fn ddb(head: &LinearHead, features: &FeatureMatrix) -> Result<Vec<f64>> {
    let rows: Vec<usize> = (0..features.rows()).collect();
    BoundaryScorer::new(head).ddb_rows(features, &rows)
}

/// Class-specific boundary distance to class `c` for every row.
pub fn dcsdb(head: &LinearHead, features: &FeatureMatrix, c: usize) -> Result<Vec<f64>> {
    if c >= head.num_classes() {
        return Err(Error::Shape(format!("class {c} outside [0, {})", head.num_classes())));
    }
    let rows: Vec<usize> = (0..features.rows()).collect();
    Ok(BoundaryScorer::new(head).scores(features, &rows)?.dcsdb_column(c))
}

pub fn boundary_scores(head: &LinearHead, features: &FeatureMatrix) -> Result<BoundaryScores> {
    let rows: Vec<usize> = (0..features.rows()).collect();
    BoundaryScorer::new(head).scores(features, &rows)
}
