use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::RoundMetrics;

/// One `(strategy, round, metric)` cell of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub round: usize,
    pub metric: String,
    pub mean: f64,
    /// `mean - 1.96 sd / sqrt(m)`; absent for a single seed.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub strategy: String,
    pub n_seeds: usize,
}

type Extract = fn(&RoundMetrics) -> Option<f64>;

const METRICS: [(&str, Extract); 4] = [
    ("test_accuracy", |m| Some(m.test_accuracy)),
    ("test_top5_accuracy", |m| m.test_top5_accuracy),
    ("imbalance_ratio", |m| Some(m.imbalance_ratio)),
    ("entropy", |m| Some(m.entropy)),
];

/// Mean and normal-approximation 95% interval.
pub fn mean_ci(values: &[f64]) -> (f64, Option<(f64, f64)>) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    let half = 1.96 * var.sqrt() / m.sqrt();
    (mean, Some((mean - half, mean + half)))
}

/// Per strategy, per round and per metric summary over the seed logs.
/// Logs of one strategy must cover the same rounds.
pub fn aggregate(logs: &[&[RoundMetrics]]) -> Result<Vec<SummaryRow>> {
    if logs.is_empty() {
        return Err(Error::Aggregation("no logs to aggregate".into()));
    }
    let mut by_strategy: BTreeMap<&str, Vec<&[RoundMetrics]>> = BTreeMap::new();
    for log in logs {
        let first = log
            .first()
            .ok_or_else(|| Error::Aggregation("empty log".into()))?;
        if log.iter().any(|m| m.strategy != first.strategy) {
            return Err(Error::Aggregation("a log mixes strategies".into()));
        }
        by_strategy.entry(first.strategy.as_str()).or_default().push(log);
    }
    let mut rows = Vec::new();
    for (strategy, group) in by_strategy {
        let grid: Vec<usize> = group[0].iter().map(|m| m.round).collect();
        for log in &group {
            let other: Vec<usize> = log.iter().map(|m| m.round).collect();
            if other != grid {
                return Err(Error::Aggregation(format!(
                    "{strategy}: seed {} covers rounds {other:?}, seed {} covers {grid:?}",
                    log[0].seed, group[0][0].seed
                )));
            }
        }
        for (r, &round) in grid.iter().enumerate() {
            for (name, extract) in METRICS {
                let values: Option<Vec<f64>> = group.iter().map(|log| extract(&log[r])).collect();
                let Some(values) = values else { continue };
                let (mean, ci) = mean_ci(&values);
                rows.push(SummaryRow {
                    round,
                    metric: name.to_owned(),
                    mean,
                    ci_low: ci.map(|c| c.0),
                    ci_high: ci.map(|c| c.1),
                    strategy: strategy.to_owned(),
                    n_seeds: values.len(),
                });
            }
        }
    }
    Ok(rows)
}

/// Columns `round, metric, mean, ci_low, ci_high, strategy, n_seeds`; a
/// missing interval is an empty cell.
pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Report(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
