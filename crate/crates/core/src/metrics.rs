use serde::{Deserialize, Serialize};

/// Everything recorded about one completed round of one seed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub strategy: String,
    pub seed: u64,
    /// |D_L| at the time the head was trained.
    pub labeled: usize,
    pub test_accuracy: f64,
    /// Present only when there are at least five classes.
    pub test_top5_accuracy: Option<f64>,
    pub best_val_accuracy: f64,
    pub imbalance_ratio: f64,
    pub empty_class: bool,
    pub entropy: f64,
    /// Labeled count per class, indexed by class.
    pub class_counts: Vec<u64>,
}

/// Wall-clock timings, kept out of [`RoundMetrics`] so result logs stay
/// bit-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTiming {
    pub round: usize,
    pub train_seconds: f64,
    pub select_seconds: Option<f64>,
}
