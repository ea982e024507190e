use log::info;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// One random partition: its unlabeled and labeled members, each sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub unlabeled: Vec<usize>,
    pub labeled: Vec<usize>,
}

fn shuffled_chunks(items: &[usize], p: usize, rng: &mut StreamRng) -> Vec<Vec<usize>> {
    let mut items = items.to_vec();
    items.shuffle(rng);
    let (base, extra) = (items.len() / p, items.len() % p);
    let mut out = Vec::with_capacity(p);
    let mut start = 0;
    for k in 0..p {
        let len = base + usize::from(k < extra);
        let mut chunk = items[start..start + len].to_vec();
        chunk.sort_unstable();
        out.push(chunk);
        start += len;
    }
    out
}

/// Splits the unlabeled and labeled sets into `p` near-equal random parts
/// each and pairs the `i`-th of one with the `i`-th of the other.
pub fn random_partitions(unlabeled: &[usize], labeled: &[usize], p: usize, rng: &mut StreamRng) -> Result<Vec<Partition>> {
    if p == 0 {
        return Err(Error::Config("number of partitions must be at least 1".into()));
    }
    let u = shuffled_chunks(unlabeled, p, rng);
    let l = shuffled_chunks(labeled, p, rng);
    Ok(u
        .into_iter()
        .zip(l)
        .map(|(unlabeled, labeled)| Partition { unlabeled, labeled })
        .collect())
}

/// Per-partition budgets: `b / p` each, plus one for the first `b mod p`.
/// A partition too small for its share keeps what it has and the deficit
/// moves to later partitions with room (wrapping around).
pub fn partition_budgets(sizes: &[usize], b: usize) -> Result<Vec<usize>> {
    let p = sizes.len();
    if p == 0 {
        return Err(Error::Config("number of partitions must be at least 1".into()));
    }
    let capacity: usize = sizes.iter().sum();
    if b > capacity {
        return Err(Error::Budget(format!("budget {b} exceeds {capacity} unlabeled samples")));
    }
    let mut budgets: Vec<usize> = (0..p).map(|k| b / p + usize::from(k < b % p)).collect();
    let mut deficit = 0;
    for (k, budget) in budgets.iter_mut().enumerate() {
        if *budget > sizes[k] {
            info!("partition {k} holds {} samples, short of its budget {}", sizes[k], budget);
            deficit += *budget - sizes[k];
            *budget = sizes[k];
        }
    }
    let mut k = 0;
    while deficit > 0 {
        if budgets[k] < sizes[k] {
            budgets[k] += 1;
            deficit -= 1;
        }
        k = (k + 1) % p;
    }
    Ok(budgets)
}
