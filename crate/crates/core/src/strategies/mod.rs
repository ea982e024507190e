//! Batch query strategies.
//!
//! Every strategy receives read access to the pool, the features and the
//! head trained this round, and returns exactly `b` distinct unlabeled
//! indices. Ties always go to the smaller sample index and every random
//! choice comes from the caller's seeded stream.

mod badge;
mod balancing;
mod boundary;
mod coreset;
mod partition;
mod random;
mod uncertainty;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::LinearHead;
use crate::matrix::FeatureMatrix;
use crate::pool::PoolState;
use crate::rng::StreamRng;

pub use badge::{average_pool, badge_embedding, badge_select, kmeanspp_seed, partitioned_badge_select};
pub use balancing::balancing_select;
pub use boundary::{base_select, mase_select};
pub use coreset::{coreset_select, partitioned_coreset_select};
pub use partition::{partition_budgets, random_partitions, Partition};
pub use random::{balanced_random_select, random_select};
pub use uncertainty::{confidence_select, margin_select};

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub strategy: String,
    /// Selected indices in selection order.
    pub indices: Vec<usize>,
    /// The score each index was selected on, where the strategy has one.
    pub scores: Option<Vec<f64>>,
    /// The class whose turn produced each selection (class-targeting strategies).
    pub target_classes: Option<Vec<u32>>,
}

impl QueryResult {
    pub fn new(strategy: impl Into<String>, indices: Vec<usize>) -> Self {
        Self {
            strategy: strategy.into(),
            indices,
            scores: None,
            target_classes: None,
        }
    }

    pub fn with_scores(mut self, scores: Vec<f64>) -> Self {
        self.scores = Some(scores);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrategyKind {
    Random,
    BalancedRandom,
    Coreset,
    PartitionedCoreset,
    Badge,
    PartitionedBadge,
    Confidence,
    Margin,
    Balancing,
    Mase,
    Base,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 11] = [
        StrategyKind::Random,
        StrategyKind::BalancedRandom,
        StrategyKind::Coreset,
        StrategyKind::PartitionedCoreset,
        StrategyKind::Badge,
        StrategyKind::PartitionedBadge,
        StrategyKind::Confidence,
        StrategyKind::Margin,
        StrategyKind::Balancing,
        StrategyKind::Mase,
        StrategyKind::Base,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::BalancedRandom => "balanced_random",
            StrategyKind::Coreset => "coreset",
            StrategyKind::PartitionedCoreset => "partitioned_coreset",
            StrategyKind::Badge => "badge",
            StrategyKind::PartitionedBadge => "partitioned_badge",
            StrategyKind::Confidence => "confidence",
            StrategyKind::Margin => "margin",
            StrategyKind::Balancing => "balancing",
            StrategyKind::Mase => "mase",
            StrategyKind::Base => "base",
        }
    }

    /// Reads ground-truth labels of unlabeled points.
    pub fn is_privileged(self) -> bool {
        self == StrategyKind::BalancedRandom
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!("unknown strategy `{s}`; valid names: {}", names.join(", ")))
        })
    }
}

impl TryFrom<String> for StrategyKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StrategyKind> for String {
    fn from(k: StrategyKind) -> String {
        k.name().to_owned()
    }
}

fn default_partitions() -> usize {
    10
}

fn default_pooled_dim() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub name: StrategyKind,
    #[serde(default = "default_partitions")]
    pub partitions: usize,
    #[serde(default = "default_pooled_dim")]
    pub pooled_dim: usize,
}

impl StrategyConfig {
    pub fn new(name: StrategyKind) -> Self {
        Self {
            name,
            partitions: default_partitions(),
            pooled_dim: default_pooled_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.partitions == 0 {
            return Err(Error::Config("strategy.partitions must be at least 1".into()));
        }
        if self.pooled_dim == 0 {
            return Err(Error::Config("strategy.pooled_dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// Read-only view handed to strategies.
#[derive(Clone, Copy)]
pub struct QueryContext<'a> {
    pub pool: &'a PoolState,
    pub features: &'a FeatureMatrix,
    pub head: &'a LinearHead,
}

/// Runs the configured strategy for a batch of `b`.
pub fn select(cfg: &StrategyConfig, ctx: &QueryContext<'_>, b: usize, rng: &mut StreamRng) -> Result<QueryResult> {
    cfg.validate()?;
    let QueryContext { pool, features, head } = *ctx;
    match cfg.name {
        StrategyKind::Random => random_select(pool, b, rng),
        StrategyKind::BalancedRandom => balanced_random_select(pool, b, rng),
        StrategyKind::Coreset => coreset_select(pool, features, b),
        StrategyKind::PartitionedCoreset => partitioned_coreset_select(pool, features, b, cfg.partitions, rng),
        StrategyKind::Badge => badge_select(pool, head, features, b, rng),
        StrategyKind::PartitionedBadge => {
            partitioned_badge_select(pool, head, features, b, cfg.partitions, cfg.pooled_dim, rng)
        }
        StrategyKind::Confidence => confidence_select(pool, head, features, b),
        StrategyKind::Margin => margin_select(pool, head, features, b),
        StrategyKind::Balancing => balancing_select(pool, head, features, b),
        StrategyKind::Mase => mase_select(pool, head, features, b),
        StrategyKind::Base => base_select(pool, head, features, b),
    }
}

pub(crate) fn check_budget(pool: &PoolState, b: usize) -> Result<()> {
    if b > pool.unlabeled().len() {
        return Err(Error::Budget(format!(
            "budget {b} exceeds {} unlabeled samples",
            pool.unlabeled().len()
        )));
    }
    Ok(())
}

/// Ascending by score, then by index.
#[inline]
pub(crate) fn score_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `b` entries with the smallest `(score, index)`, in that order.
pub(crate) fn bottom_b(mut scored: Vec<(f64, usize)>, b: usize) -> Vec<(f64, usize)> {
    if b == 0 {
        return Vec::new();
    }
    if b < scored.len() {
        scored.select_nth_unstable_by(b - 1, score_order);
        scored.truncate(b);
    }
    scored.sort_unstable_by(score_order);
    scored
}

pub(crate) fn from_scored(name: &str, picked: Vec<(f64, usize)>) -> QueryResult {
    let (scores, indices) = picked.into_iter().unzip();
    QueryResult::new(name, indices).with_scores(scores)
}
