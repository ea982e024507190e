//! Pool-based active learning on frozen features with a linear head.
//!
//! The crate covers feature I/O, a long-tail synthetic generator, the
//! labeled/unlabeled pool, a softmax linear head with its trainer,
//! decision-boundary geometry, the query strategies and a multi-round,
//! multi-seed simulator.

pub mod commands;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linear;
pub mod matrix;
pub mod metrics;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
pub mod pool;
pub mod rng;
pub mod simulator;
pub mod strategies;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use geometry::{boundary_scores, dcsdb, ddb, BoundaryScorer, BoundaryScores};
pub use linear::{train, ClassWeighting, LinearHead, Schedule, TrainConfig, TrainReport};
pub use matrix::FeatureMatrix;
pub use pool::{class_histogram, entropy, imbalance_ratio, ClassDistribution, ClassHistogram, Imbalance, PoolState};
pub use strategies::{select, QueryContext, QueryResult, StrategyConfig, StrategyKind};
pub use synth::{generate, longtail_counts, SynthPool, SynthSpec};
pub use simulator::{resume, run_experiment, ExperimentConfig, ExperimentOutcome};
