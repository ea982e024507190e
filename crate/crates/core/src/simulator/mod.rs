//! Multi-round, multi-seed active-learning runs.
//!
//! Per seed run: split, draw the initial labeled set, then for rounds
//! `k = 0..=K` train a fresh head on the labeled set, log metrics and, for
//! `k < K`, query `b` points with that head and label them. Every random
//! choice comes from a named stream of the run seed, so all strategies in
//! one experiment share splits, initial set and training seeds.

pub mod aggregate;
mod config;
mod data;

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

pub use aggregate::{aggregate, write_summary_csv, SummaryRow};
pub use config::{
    apply_override, hash_value, DataConfig, ExperimentConfig, PoolConfig, RunConfig, RunIdentity, StrategyNames,
    StrategySection,
};
pub use data::Dataset;

use crate::error::{Error, Result};
use crate::io::{append_json_line, Checkpoint, ResultsLog, CHECKPOINT_VERSION};
use crate::linear::train;
use crate::metrics::{RoundMetrics, RoundTiming};
use crate::pool::{entropy, imbalance_ratio, PoolState};
use crate::rng::stream;
use crate::strategies::{select, QueryContext, StrategyKind};

/// File name of the expanded config written next to the logs.
pub const CONFIG_FILE: &str = "config.toml";

/// Where one seed run keeps its files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub log: PathBuf,
    pub timing: PathBuf,
    pub checkpoint: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &Path, kind: StrategyKind, seed: u64) -> Self {
        let dir = out_dir.join(kind.name());
        Self {
            log: dir.join(format!("seed-{seed}.aljsonl")),
            timing: dir.join(format!("seed-{seed}.timing.aljsonl")),
            checkpoint: dir.join(format!("seed-{seed}.checkpoint.json")),
        }
    }
}

/// Test hooks for interrupting runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunControl {
    /// Stop (as if killed) once this round's checkpoint is written.
    pub stop_after_round: Option<usize>,
}

#[derive(Debug)]
pub struct SeedRun {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub paths: Option<RunPaths>,
    pub outcome: Result<Vec<RoundMetrics>>,
}

#[derive(Debug, Default)]
pub struct ExperimentOutcome {
    pub runs: Vec<SeedRun>,
}

impl ExperimentOutcome {
    pub fn first_error(&self) -> Option<&Error> {
        self.runs.iter().find_map(|r| r.outcome.as_ref().err())
    }

    pub fn is_success(&self) -> bool {
        self.first_error().is_none()
    }

    /// Logs of the runs that completed.
    pub fn logs(&self) -> Vec<&[RoundMetrics]> {
        self.runs.iter().filter_map(|r| r.outcome.as_deref().ok()).collect()
    }

    pub fn log(&self, kind: StrategyKind, seed: u64) -> Option<&[RoundMetrics]> {
        self.runs
            .iter()
            .find(|r| r.strategy == kind && r.seed == seed)
            .and_then(|r| r.outcome.as_deref().ok())
    }
}

/// Runs every configured strategy for every seed. With `run.out_dir` set,
/// logs, timings and checkpoints are written there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment_with(cfg, RunControl::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, control: RunControl) -> Result<ExperimentOutcome> {
    let (ds, kinds) = prepare(cfg)?;
    if let Some(dir) = &cfg.run.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
    }
    execute(cfg, &ds, &kinds, false, control)
}

/// Continues the runs of `cfg` from their checkpoints. Runs without a
/// checkpoint start over; finished runs are left alone. Refuses when a
/// checkpoint was written under a different configuration.
pub fn resume(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    resume_with(cfg, RunControl::default())
}

pub fn resume_with(cfg: &ExperimentConfig, control: RunControl) -> Result<ExperimentOutcome> {
    let out = cfg
        .run
        .out_dir
        .as_ref()
        .ok_or_else(|| Error::Config("resume needs run.out_dir".into()))?;
    let (ds, kinds) = prepare(cfg)?;
    for &kind in &kinds {
        for &seed in &cfg.run.seeds {
            let paths = RunPaths::new(out, kind, seed);
            if paths.checkpoint.exists() {
                check_checkpoint(&Checkpoint::load(&paths.checkpoint)?, cfg, kind, seed)?;
            }
        }
    }
    execute(cfg, &ds, &kinds, true, control)
}

fn prepare(cfg: &ExperimentConfig) -> Result<(Dataset, Vec<StrategyKind>)> {
    cfg.validate()?;
    let kinds = cfg.strategy.kinds()?;
    if let Some((spec, _)) = cfg.data.synth_spec() {
        // refuse before generating anything
        cfg.check_capacity(spec.counts()?.iter().sum())?;
    }
    let ds = Dataset::load(&cfg.data)?;
    cfg.check_capacity(ds.non_test_rows())?;
    if ds.features.dim() == 0 {
        return Err(Error::Shape("features have dimension 0".into()));
    }
    Ok((ds, kinds))
}

fn execute(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    kinds: &[StrategyKind],
    resume: bool,
    control: RunControl,
) -> Result<ExperimentOutcome> {
    let jobs: Vec<(StrategyKind, u64)> = kinds
        .iter()
        .flat_map(|&k| cfg.run.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let one = |&(kind, seed): &(StrategyKind, u64)| {
        let paths = cfg.run.out_dir.as_deref().map(|d| RunPaths::new(d, kind, seed));
        let outcome = run_seed(ds, cfg, kind, seed, paths.as_ref(), resume, control);
        match &outcome {
            Ok(log) => info!("{kind} seed {seed}: {} rounds logged", log.len()),
            Err(e) => warn!("{kind} seed {seed} aborted: {e}"),
        }
        SeedRun {
            strategy: kind,
            seed,
            paths,
            outcome,
        }
    };
    let runs = if cfg.run.jobs <= 1 {
        jobs.iter().map(one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.run.jobs)))?
            .install(|| jobs.par_iter().map(one).collect())
    };
    Ok(ExperimentOutcome { runs })
}

fn check_checkpoint(ckpt: &Checkpoint, cfg: &ExperimentConfig, kind: StrategyKind, seed: u64) -> Result<()> {
    let identity = cfg.identity(kind, seed);
    if ckpt.config_hash == identity.hash() {
        return Ok(());
    }
    let mut diffs = Vec::new();
    diff_values("", &ckpt.config, &identity.to_value(), &mut diffs);
    Err(Error::CheckpointMismatch(format!(
        "{kind} seed {seed} was started with a different configuration; changed: {}",
        if diffs.is_empty() { "(unknown)".to_owned() } else { diffs.join("; ") }
    )))
}

/// Dotted paths whose values differ, as `path: old -> new`.
fn diff_values(prefix: &str, old: &serde_json::Value, new: &serde_json::Value, out: &mut Vec<String>) {
    use serde_json::Value;
    match (old, new) {
        (Value::Object(a), Value::Object(b)) => {
            let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
            for k in keys {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match (a.get(k), b.get(k)) {
                    (Some(x), Some(y)) => diff_values(&path, x, y, out),
                    (x, y) => out.push(format!(
                        "{path}: {} -> {}",
                        x.map_or("(absent)".into(), Value::to_string),
                        y.map_or("(absent)".into(), Value::to_string)
                    )),
                }
            }
        }
        (a, b) if a != b => out.push(format!("{prefix}: {a} -> {b}")),
        _ => {}
    }
}

/// One strategy and seed, from scratch or from its checkpoint.
pub fn run_seed(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    kind: StrategyKind,
    seed: u64,
    paths: Option<&RunPaths>,
    resume: bool,
    control: RunControl,
) -> Result<Vec<RoundMetrics>> {
    let identity = cfg.identity(kind, seed);
    let strategy_cfg = identity.strategy.clone();
    let (rounds, budget) = (cfg.pool.rounds, cfg.pool.budget);
    let mut pool = PoolState::split(ds.labels.clone(), ds.num_classes, cfg.pool.val_frac, &ds.test_idx, seed)?;

    let checkpoint = match paths {
        Some(p) if resume && p.checkpoint.exists() => Some(Checkpoint::load(&p.checkpoint)?),
        _ => None,
    };
    let (mut log, mut rng, start) = match checkpoint {
        Some(ckpt) => {
            check_checkpoint(&ckpt, cfg, kind, seed)?;
            let p = paths.expect("checkpoint implies paths");
            let mut log = ResultsLog::open(&p.log)?;
            if log.len() < ckpt.next_round {
                return Err(Error::CheckpointMismatch(format!(
                    "{} holds {} rounds but the checkpoint expects {}",
                    p.log.display(),
                    log.len(),
                    ckpt.next_round
                )));
            }
            log.truncate_rounds(ckpt.next_round)?;
            if ckpt.finished {
                return Ok(log.records().to_vec());
            }
            truncate_timings(&p.timing, ckpt.next_round)?;
            pool.restore(&ckpt.labeled, cfg.pool.initial_size, ckpt.next_round)?;
            (log, ckpt.strategy_rng, ckpt.next_round)
        }
        None => {
            pool.seed_initial(cfg.pool.initial_size, seed)?;
            let log = match paths {
                Some(p) => {
                    if let Some(dir) = p.log.parent() {
                        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    }
                    fs::write(&p.timing, "").map_err(|e| Error::io(&p.timing, e))?;
                    ResultsLog::create(&p.log)?
                }
                None => ResultsLog::in_memory(),
            };
            (log, stream(seed, "strategy"), 0)
        }
    };

    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    let c = ds.num_classes;
    let test_labels: Vec<u32> = ds.test_idx.iter().map(|&i| ds.labels[i]).collect();
    for round in start..=rounds {
        let started = Instant::now();
        let report = train(&ds.features, &ds.labels, pool.labeled(), pool.val_idx(), c, &train_cfg)?;
        let train_seconds = started.elapsed().as_secs_f64();
        let head = report.head;
        let dist = pool.labeled_distribution();
        let imbalance = imbalance_ratio(&dist)?;
        let top5 = if c >= 5 {
            Some(head.top_k_accuracy(&ds.features, &ds.test_idx, &test_labels, 5)?)
        } else {
            None
        };
        log.append_round(RoundMetrics {
            round,
            strategy: kind.name().to_owned(),
            seed,
            labeled: pool.labeled().len(),
            test_accuracy: head.accuracy(&ds.features, &ds.test_idx, &test_labels)?,
            test_top5_accuracy: top5,
            best_val_accuracy: report.best_val_accuracy,
            imbalance_ratio: imbalance.ratio,
            empty_class: imbalance.empty_class,
            entropy: entropy(&dist)?,
            class_counts: dist.counts,
        })?;

        let mut select_seconds = None;
        if round < rounds {
            let started = Instant::now();
            let ctx = QueryContext {
                pool: &pool,
                features: &ds.features,
                head: &head,
            };
            let query = select(&strategy_cfg, &ctx, budget, &mut rng)?;
            pool.commit_query(&query, budget)?;
            select_seconds = Some(started.elapsed().as_secs_f64());
        }

        if let Some(p) = paths {
            append_json_line(
                &p.timing,
                &RoundTiming {
                    round,
                    train_seconds,
                    select_seconds,
                },
            )?;
            Checkpoint {
                version: CHECKPOINT_VERSION,
                config_hash: identity.hash(),
                config: identity.to_value(),
                strategy: kind.name().to_owned(),
                seed,
                next_round: round + 1,
                finished: round == rounds,
                labeled: pool.labeled().to_vec(),
                strategy_rng: rng.clone(),
            }
            .save(&p.checkpoint)?;
        }
        if control.stop_after_round == Some(round) && round < rounds {
            info!("{kind} seed {seed}: stopping after round {round} as requested");
            break;
        }
    }
    Ok(log.records().to_vec())
}

fn truncate_timings(path: &Path, rounds: usize) -> Result<()> {
    let Ok(file) = fs::File::open(path) else {
        return Ok(());
    };
    let mut kept = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match serde_json::from_str::<RoundTiming>(&line) {
            Ok(t) if t.round < rounds => {
                kept.push_str(&line);
                kept.push('\n');
            }
            _ => {}
        }
    }
    fs::write(path, kept).map_err(|e| Error::io(path, e))
}

/// Loads every results log (`*.aljsonl`, not timing sidecars) below `dir`,
/// in path order.
pub fn collect_logs(dir: &Path) -> Result<Vec<(PathBuf, Vec<RoundMetrics>)>> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                if name.ends_with(".aljsonl") && !name.ends_with(".timing.aljsonl") {
                    files.push(path);
                }
            }
        }
    }
    files.sort();
    files
        .into_iter()
        .map(|p| ResultsLog::read(&p).map(|records| (p, records)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_toml(
            r#"
[data]
kind = "synth"
num_classes = 3
feature_dim = 4
max_per_class = 80
imbalance_ratio = 2.0
class_separation = 4.0
noise_sigma = 1.0
seed = 7
test_per_class = 10

[pool]
val_frac = 0.1
initial_size = 12
budget = 6
rounds = 3

[train]
epochs = 6
early_stop_patience = 6
batch_size = 16
learning_rate = 0.1
weight_decay = 0.0
momentum = 0.9
schedule = { kind = "cosine", t_max = 6 }

[strategy]
name = ["random", "base"]

[run]
seeds = [0, 1]
"#,
            &[],
        )
        .unwrap();
        cfg.validate().unwrap();
        cfg.run.out_dir = None;
        cfg
    }

    #[test]
    fn loop_arithmetic_and_fairness() {
        let cfg = tiny_config();
        let out = run_experiment(&cfg).unwrap();
        assert!(out.is_success());
        for run in &out.runs {
            let log = run.outcome.as_ref().unwrap();
            assert_eq!(log.len(), 4);
            for (k, m) in log.iter().enumerate() {
                assert_eq!(m.labeled, 12 + 6 * k);
                assert_eq!(m.class_counts.iter().sum::<u64>() as usize, m.labeled);
            }
        }
        for seed in [0, 1] {
            let a = out.log(StrategyKind::Random, seed).unwrap();
            let b = out.log(StrategyKind::Base, seed).unwrap();
            assert_eq!(a[0], RoundMetrics { strategy: "random".into(), ..b[0].clone() });
        }
    }

    #[test]
    fn identical_runs_identical_logs() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.logs(), b.logs());
    }

    #[test]
    fn interrupted_run_resumes_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.strategy.name = StrategyNames::One("partitioned_coreset".into());
        cfg.strategy.partitions = 2;
        cfg.run.seeds = vec![3];
        cfg.run.out_dir = Some(dir.path().join("full"));
        run_experiment(&cfg).unwrap();
        let full = fs::read(dir.path().join("full/partitioned_coreset/seed-3.aljsonl")).unwrap();

        cfg.run.out_dir = Some(dir.path().join("cut"));
        let partial = run_experiment_with(&cfg, RunControl { stop_after_round: Some(1) }).unwrap();
        assert_eq!(partial.runs[0].outcome.as_ref().unwrap().len(), 2);
        let out = resume(&cfg).unwrap();
        assert!(out.is_success());
        let resumed = fs::read(dir.path().join("cut/partitioned_coreset/seed-3.aljsonl")).unwrap();
        assert_eq!(full, resumed);

        // finished: a no-op
        resume(&cfg).unwrap();
        assert_eq!(fs::read(dir.path().join("cut/partitioned_coreset/seed-3.aljsonl")).unwrap(), full);

        cfg.pool.budget = 5;
        let err = resume(&cfg).unwrap_err();
        assert!(matches!(err, Error::CheckpointMismatch(_)));
        assert!(err.to_string().contains("pool.budget: 6 -> 5"), "{err}");
    }

    #[test]
    fn capacity_refused_up_front() {
        let mut cfg = tiny_config();
        cfg.pool.budget = 1000;
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_is_reported_per_run() {
        let mut cfg = tiny_config();
        cfg.train.learning_rate = 1e12;
        cfg.train.weight_decay = 1.0;
        cfg.train.epochs = 100;
        cfg.train.early_stop_patience = 100;
        cfg.train.schedule = crate::linear::Schedule::Step { factor: 1.0, every: 1 };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.runs.len(), 4);
        assert!(out.runs.iter().all(|r| matches!(r.outcome, Err(Error::Divergence { .. }))));
    }
}
