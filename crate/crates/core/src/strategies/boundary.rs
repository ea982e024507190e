//! Margin selection (bottom-`b` distance to the nearest decision boundary)
//! and balanced selection (round-robin over classes, each turn taking the
//! point closest to that class's boundary).

use std::collections::{BinaryHeap, HashSet};

use rayon::prelude::*;

use super::{bottom_b, check_budget, from_scored, QueryResult};
use crate::error::Result;
use crate::geometry::BoundaryScorer;
use crate::linear::LinearHead;
use crate::matrix::FeatureMatrix;
use crate::pool::PoolState;

/// The `b` unlabeled points with the smallest `ddb`. Distances do not change
/// within a round, so repeatedly taking the argmin is bottom-`b` selection.
pub fn mase_select(pool: &PoolState, head: &LinearHead, features: &FeatureMatrix, b: usize) -> Result<QueryResult> {
    check_budget(pool, b)?;
    let unlabeled = pool.unlabeled();
    let ddb = BoundaryScorer::new(head).ddb_rows(features, unlabeled)?;
    let scored = ddb.into_iter().zip(unlabeled.iter().copied()).collect();
    Ok(from_scored("mase", bottom_b(scored, b)))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist.total_cmp(&other.dist).then(self.index.cmp(&other.index))
    }
}

/// Per class, the `cap` smallest candidates seen so far (max-heaps).
struct ClassShortlists {
    cap: usize,
    heaps: Vec<BinaryHeap<Candidate>>,
}

impl ClassShortlists {
    fn new(num_classes: usize, cap: usize) -> Self {
        Self {
            cap,
            heaps: (0..num_classes).map(|_| BinaryHeap::with_capacity(cap + 1)).collect(),
        }
    }

    #[inline]
    fn offer(&mut self, class: usize, cand: Candidate) {
        let heap = &mut self.heaps[class];
        if heap.len() < self.cap {
            heap.push(cand);
        } else if let Some(mut top) = heap.peek_mut() {
            if cand < *top {
                *top = cand;
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (c, heap) in other.heaps.into_iter().enumerate() {
            for cand in heap {
                self.offer(c, cand);
            }
        }
        self
    }
}

/// Balanced selection.
///
/// Classes take turns in ascending order; on its turn class `c` takes the
/// not-yet-selected unlabeled point with the smallest `dcsdb(., c)`.
/// Classes with no candidates left are skipped and selection stops at
/// exactly `b` points.
///
/// At most `b - 1` of a class's candidates can be taken before its last
/// turn, so only each class's `b` smallest distances are kept: one pass,
/// `O(C (d + log b))` per unlabeled point.
pub fn base_select(pool: &PoolState, head: &LinearHead, features: &FeatureMatrix, b: usize) -> Result<QueryResult> {
    check_budget(pool, b)?;
    let c_n = head.num_classes();
    let scorer = BoundaryScorer::new(head);
    let unlabeled = pool.unlabeled();
    if b == 0 {
        return Ok(QueryResult::new("base", Vec::new()));
    }
    // validates the feature dimension before the parallel pass
    scorer.ddb_rows(features, &[])?;

    let shortlists = unlabeled
        .par_chunks(4096)
        .fold(
            || ClassShortlists::new(c_n, b),
            |mut acc, chunk| {
                let mut z = vec![0.0; c_n];
                let mut dists = vec![0.0; c_n];
                for &i in chunk {
                    scorer.score_row(features.row(i), &mut z, &mut dists);
                    for (c, &dist) in dists.iter().enumerate() {
                        acc.offer(c, Candidate { dist, index: i });
                    }
                }
                acc
            },
        )
        .reduce(|| ClassShortlists::new(c_n, b), ClassShortlists::merge);

    let lists: Vec<Vec<Candidate>> = shortlists.heaps.into_iter().map(BinaryHeap::into_sorted_vec).collect();
    let mut cursor = vec![0usize; c_n];
    let mut taken = HashSet::with_capacity(b);
    let mut indices = Vec::with_capacity(b);
    let mut scores = Vec::with_capacity(b);
    let mut targets = Vec::with_capacity(b);
    while indices.len() < b {
        let before = indices.len();
        for (c, list) in lists.iter().enumerate() {
            if indices.len() == b {
                break;
            }
            let pos = &mut cursor[c];
            while *pos < list.len() && taken.contains(&list[*pos].index) {
                *pos += 1;
            }
            let Some(cand) = list.get(*pos) else { continue };
            taken.insert(cand.index);
            indices.push(cand.index);
            scores.push(cand.dist);
            targets.push(c as u32);
        }
        assert!(indices.len() > before, "shortlists exhausted before the budget");
    }
    let mut q = QueryResult::new("base", indices).with_scores(scores);
    q.target_classes = Some(targets);
    Ok(q)
}
