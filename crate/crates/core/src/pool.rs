//! Sample-index bookkeeping for one run: labeled / unlabeled / validation /
//! test splits, the label oracle, and class-distribution metrics.

use std::collections::HashSet;
use std::sync::Mutex;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::strategies::QueryResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Unlabeled,
    Labeled,
    Validation,
    Test,
}

/// One read of ground-truth labels for points that are not labeled yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub strategy: String,
    pub round: Option<usize>,
}

#[derive(Debug)]
pub struct PoolState {
    num_classes: usize,
    roles: Vec<Role>,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    val_idx: Vec<usize>,
    test_idx: Vec<usize>,
    initial_size: usize,
    round: Option<usize>,
    oracle: Vec<u32>,
    audit: Mutex<Vec<AuditEntry>>,
}

impl Clone for PoolState {
    fn clone(&self) -> Self {
        Self {
            num_classes: self.num_classes,
            roles: self.roles.clone(),
            labeled: self.labeled.clone(),
            unlabeled: self.unlabeled.clone(),
            val_idx: self.val_idx.clone(),
            test_idx: self.test_idx.clone(),
            initial_size: self.initial_size,
            round: self.round,
            oracle: self.oracle.clone(),
            audit: Mutex::new(self.audit_log()),
        }
    }
}

impl PoolState {
    /// Draws `round(val_frac * n_train)` validation indices uniformly from
    /// the non-test indices; the rest form the (fully unlabeled) AL pool.
    pub fn split(labels: Vec<u32>, num_classes: usize, val_frac: f64, test_idx: &[usize], seed: u64) -> Result<Self> {
        let n = labels.len();
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= num_classes) {
            return Err(Error::Config(format!(
                "label {l} at index {i} is outside [0, {num_classes})"
            )));
        }
        if !(val_frac > 0.0 && val_frac < 1.0) {
            return Err(Error::Config(format!("val_frac {val_frac} must lie in (0, 1)")));
        }
        let mut roles = vec![Role::Unlabeled; n];
        for &t in test_idx {
            if t >= n {
                return Err(Error::Config(format!("test index {t} out of range for {n} samples")));
            }
            if roles[t] == Role::Test {
                return Err(Error::Config(format!("test index {t} listed twice")));
            }
            roles[t] = Role::Test;
        }
        let candidates: Vec<usize> = (0..n).filter(|&i| roles[i] != Role::Test).collect();
        let n_val = (val_frac * candidates.len() as f64).round() as usize;
        if n_val == 0 || n_val >= candidates.len() {
            return Err(Error::Config(format!(
                "val_frac {val_frac} of {} training candidates leaves an empty split",
                candidates.len()
            )));
        }
        let mut rng = stream(seed, "split");
        let mut val_idx: Vec<usize> = index::sample(&mut rng, candidates.len(), n_val)
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        val_idx.sort_unstable();
        for &v in &val_idx {
            roles[v] = Role::Validation;
        }
        let unlabeled = (0..n).filter(|&i| roles[i] == Role::Unlabeled).collect();
        let mut test_idx = test_idx.to_vec();
        test_idx.sort_unstable();
        Ok(Self {
            num_classes,
            roles,
            labeled: Vec::new(),
            unlabeled,
            val_idx,
            test_idx,
            initial_size: 0,
            round: None,
            oracle: labels,
            audit: Mutex::new(Vec::new()),
        })
    }

    /// A pool with explicit validation and test indices; every other index
    /// is an unlabeled training point.
    pub fn with_splits(labels: Vec<u32>, num_classes: usize, val_idx: &[usize], test_idx: &[usize]) -> Result<Self> {
        let n = labels.len();
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= num_classes) {
            return Err(Error::Config(format!(
                "label {l} at index {i} is outside [0, {num_classes})"
            )));
        }
        let mut roles = vec![Role::Unlabeled; n];
        let tagged = val_idx
            .iter()
            .map(|&i| (i, Role::Validation))
            .chain(test_idx.iter().map(|&i| (i, Role::Test)));
        for (i, role) in tagged {
            if i >= n || roles[i] != Role::Unlabeled {
                return Err(Error::Config(format!("split index {i} is out of range or listed twice")));
            }
            roles[i] = role;
        }
        let mut val_idx = val_idx.to_vec();
        val_idx.sort_unstable();
        let mut test_idx = test_idx.to_vec();
        test_idx.sort_unstable();
        Ok(Self {
            num_classes,
            unlabeled: (0..n).filter(|&i| roles[i] == Role::Unlabeled).collect(),
            roles,
            labeled: Vec::new(),
            val_idx,
            test_idx,
            initial_size: 0,
            round: None,
            oracle: labels,
            audit: Mutex::new(Vec::new()),
        })
    }

    /// Moves `m` uniformly drawn unlabeled indices into the labeled set and
    /// sets the round to 0.
    pub fn seed_initial(&mut self, m: usize, seed: u64) -> Result<()> {
        if m > self.unlabeled.len() {
            return Err(Error::Budget(format!(
                "initial pool of {m} exceeds {} unlabeled samples",
                self.unlabeled.len()
            )));
        }
        let mut rng = stream(seed, "init-pool");
        let mut picked: Vec<usize> = index::sample(&mut rng, self.unlabeled.len(), m)
            .into_iter()
            .map(|k| self.unlabeled[k])
            .collect();
        picked.sort_unstable();
        self.move_to_labeled(&picked);
        self.initial_size = m;
        self.round = Some(0);
        Ok(())
    }

    /// Rebuilds the labeled set from a checkpoint.
    pub fn restore(&mut self, labeled: &[usize], initial_size: usize, round: usize) -> Result<()> {
        if !self.labeled.is_empty() {
            return Err(Error::Config("restore needs a freshly split pool".into()));
        }
        let mut seen = HashSet::with_capacity(labeled.len());
        for &i in labeled {
            if i >= self.roles.len() || self.roles[i] != Role::Unlabeled || !seen.insert(i) {
                return Err(Error::CheckpointMismatch(format!(
                    "labeled index {i} is not a unique training index of this pool"
                )));
            }
        }
        self.move_to_labeled(labeled);
        self.initial_size = initial_size;
        self.round = Some(round);
        Ok(())
    }

    /// Labels the queried indices and advances the round.
    pub fn commit_query(&mut self, q: &QueryResult, budget: usize) -> Result<()> {
        let violation = |message: String| Error::ContractViolation {
            strategy: q.strategy.clone(),
            message,
        };
        if self.round.is_none() {
            return Err(Error::Initialization("commit before seed_initial".into()));
        }
        if q.indices.len() != budget {
            return Err(violation(format!(
                "returned {} indices for a budget of {budget}",
                q.indices.len()
            )));
        }
        let mut seen = HashSet::with_capacity(q.indices.len());
        for &i in &q.indices {
            if !seen.insert(i) {
                return Err(violation(format!("index {i} returned twice")));
            }
            match self.roles.get(i) {
                Some(Role::Unlabeled) => {}
                Some(Role::Labeled) => return Err(violation(format!("index {i} is already labeled"))),
                Some(_) => return Err(violation(format!("index {i} is not in the training pool"))),
                None => return Err(violation(format!("index {i} is out of range"))),
            }
        }
        self.move_to_labeled(&q.indices);
        self.round = self.round.map(|r| r + 1);
        Ok(())
    }

    fn move_to_labeled(&mut self, indices: &[usize]) {
        for &i in indices {
            self.roles[i] = Role::Labeled;
        }
        self.labeled.extend_from_slice(indices);
        self.labeled.sort_unstable();
        let roles = &self.roles;
        self.unlabeled.retain(|&i| roles[i] == Role::Unlabeled);
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn n_total(&self) -> usize {
        self.roles.len()
    }

    /// Labeled indices, ascending.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    /// Unlabeled training indices, ascending.
    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn val_idx(&self) -> &[usize] {
        &self.val_idx
    }

    pub fn test_idx(&self) -> &[usize] {
        &self.test_idx
    }

    pub fn train_size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn initial_size(&self) -> usize {
        self.initial_size
    }

    /// `None` before the initial pool is seeded.
    pub fn round(&self) -> Option<usize> {
        self.round
    }

    pub fn is_unlabeled(&self, i: usize) -> bool {
        self.roles.get(i) == Some(&Role::Unlabeled)
    }

    /// Label of a labeled, validation or test index; unlabeled points
    /// stay hidden.
    pub fn label(&self, i: usize) -> Option<u32> {
        match self.roles.get(i)? {
            Role::Unlabeled => None,
            _ => Some(self.oracle[i]),
        }
    }

    pub fn labels_of(&self, indices: &[usize]) -> Result<Vec<u32>> {
        indices
            .iter()
            .map(|&i| {
                self.label(i)
                    .ok_or_else(|| Error::Initialization(format!("label of unlabeled index {i} requested")))
            })
            .collect()
    }

    pub fn labeled_labels(&self) -> Vec<u32> {
        self.labeled.iter().map(|&i| self.oracle[i]).collect()
    }

    /// Full ground truth, including unlabeled points. Every call is
    /// recorded in the audit log under `strategy`.
    pub fn privileged_labels(&self, strategy: &str) -> &[u32] {
        self.audit.lock().unwrap().push(AuditEntry {
            strategy: strategy.to_owned(),
            round: self.round,
        });
        &self.oracle
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        self.audit.lock().unwrap().clone()
    }

    pub fn labeled_distribution(&self) -> ClassDistribution {
        ClassDistribution::from_labels(self.labeled.iter().map(|&i| self.oracle[i]), self.num_classes)
    }
}

/// Per-class counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: Vec<u64>,
}

impl ClassDistribution {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn from_labels(labels: impl IntoIterator<Item = u32>, num_classes: usize) -> Self {
        let mut counts = vec![0u64; num_classes];
        for l in labels {
            counts[l as usize] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Imbalance {
    pub ratio: f64,
    /// Some class has no samples; the ratio's denominator was clamped to 1.
    pub empty_class: bool,
}

/// Largest class count over the smallest, the latter clamped to 1.
pub fn imbalance_ratio(d: &ClassDistribution) -> Result<Imbalance> {
    if d.total() == 0 {
        return Err(Error::UndefinedMetric("imbalance ratio of an empty distribution".into()));
    }
    let max = *d.counts.iter().max().unwrap();
    let min = *d.counts.iter().min().unwrap();
    Ok(Imbalance {
        ratio: max as f64 / min.max(1) as f64,
        empty_class: min == 0,
    })
}

/// Shannon entropy of the class proportions, in nats.
pub fn entropy(d: &ClassDistribution) -> Result<f64> {
    let total = d.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("entropy of an empty distribution".into()));
    }
    let total = total as f64;
    Ok(-d
        .counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassHistogram {
    /// Indexed by class.
    pub counts: Vec<u64>,
    /// Least-queried class first.
    pub sorted: Vec<u64>,
}

pub fn class_histogram(pool: &PoolState) -> ClassHistogram {
    let counts = pool.labeled_distribution().counts;
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    ClassHistogram { counts, sorted }
}
