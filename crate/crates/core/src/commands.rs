//! The operations behind the command-line subcommands, callable directly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::BoundaryScorer;
use crate::io::{write_array, ArrayFile};
use crate::linear::train;
use crate::metrics::RoundMetrics;
use crate::pool::PoolState;
use crate::simulator::aggregate::mean_ci;
use crate::simulator::{
    aggregate, collect_logs, resume_with, run_experiment_with, write_summary_csv, RunControl, Dataset, ExperimentConfig, ExperimentOutcome,
    CONFIG_FILE,
};
use crate::synth::{generate, generate_balanced_test, SynthSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthManifest {
    pub spec: SynthSpec,
    pub counts: Vec<usize>,
    pub test_per_class: usize,
    pub files: BTreeMap<String, String>,
}

/// Writes the configured synthetic pool and its test set as array files
/// plus `manifest.json`.
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<SynthManifest> {
    let (spec, test_per_class) = cfg
        .data
        .synth_spec()
        .ok_or_else(|| Error::Config("data.kind must be \"synth\" to generate a pool".into()))?;
    spec.validate()?;
    let pool = generate(&spec)?;
    let (test_x, test_y) = generate_balanced_test(&spec, &pool.means, test_per_class)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = BTreeMap::new();
    for (key, name, array) in [
        ("features", "features.alf", ArrayFile::from_features(&pool.features)),
        ("labels", "labels.alf", ArrayFile::from_labels(&pool.labels)?),
        ("test_features", "test_features.alf", ArrayFile::from_features(&test_x)),
        ("test_labels", "test_labels.alf", ArrayFile::from_labels(&test_y)?),
    ] {
        write_array(out.join(name), &array)?;
        files.insert(key.to_owned(), name.to_owned());
    }
    let manifest = SynthManifest {
        counts: pool.counts.clone(),
        spec,
        test_per_class,
        files,
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Report(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn cmd_run(cfg: &ExperimentConfig, control: RunControl) -> Result<ExperimentOutcome> {
    if cfg.run.out_dir.is_none() {
        return Err(Error::Config("an output directory is required (run.out_dir or --out)".into()));
    }
    run_experiment_with(cfg, control)
}

/// Resumes the runs in `out`, with `cfg` or else the config stored there.
pub fn cmd_resume(out: &Path, cfg: Option<ExperimentConfig>, control: RunControl) -> Result<ExperimentOutcome> {
    let mut cfg = match cfg {
        Some(c) => c,
        None => ExperimentConfig::from_file(out.join(CONFIG_FILE), &[])?,
    };
    cfg.run.out_dir = Some(out.to_path_buf());
    resume_with(&cfg, control)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub histograms: PathBuf,
    pub entropy: PathBuf,
}

/// Reads every results log under `logs_dir` and writes `summary.csv`,
/// `histograms.csv` and `entropy.csv` to `out`.
pub fn cmd_report(logs_dir: &Path, out: &Path) -> Result<ReportFiles> {
    if !logs_dir.is_dir() {
        return Err(Error::Report(format!("{} is not a directory", logs_dir.display())));
    }
    let logs: Vec<Vec<RoundMetrics>> = collect_logs(logs_dir)?
        .into_iter()
        .map(|(_, records)| records)
        .filter(|r| !r.is_empty())
        .collect();
    if logs.is_empty() {
        return Err(Error::Report(format!("no results logs under {}", logs_dir.display())));
    }
    let refs: Vec<&[RoundMetrics]> = logs.iter().map(Vec::as_slice).collect();
    let rows = aggregate(&refs)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = ReportFiles {
        summary: out.join("summary.csv"),
        histograms: out.join("histograms.csv"),
        entropy: out.join("entropy.csv"),
    };
    write_summary_csv(&rows, &files.summary)?;
    write_histograms(&refs, &files.histograms)?;
    write_entropy(&refs, &files.entropy)?;
    Ok(files)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Report(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Report(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Per strategy and round: class proportions sorted in decreasing order,
/// averaged over seeds.
fn write_histograms(logs: &[&[RoundMetrics]], path: &Path) -> Result<()> {
    let mut cells: BTreeMap<(String, usize), Vec<Vec<f64>>> = BTreeMap::new();
    let mut classes = 0;
    for log in logs {
        for m in log.iter() {
            let total = m.class_counts.iter().sum::<u64>() as f64;
            let mut p: Vec<f64> = m.class_counts.iter().map(|&c| c as f64 / total).collect();
            p.sort_by(|a, b| b.total_cmp(a));
            classes = classes.max(p.len());
            cells.entry((m.strategy.clone(), m.round)).or_default().push(p);
        }
    }
    let mut w = csv_writer(path)?;
    let mut header = vec!["strategy".to_owned(), "round".to_owned(), "n_seeds".to_owned()];
    header.extend((0..classes).map(|k| format!("rank_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for ((strategy, round), seeds) in cells {
        let mut record = vec![strategy, round.to_string(), seeds.len().to_string()];
        for k in 0..classes {
            let mean = seeds.iter().map(|p| p.get(k).copied().unwrap_or(0.0)).sum::<f64>() / seeds.len() as f64;
            record.push(mean.to_string());
        }
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_entropy(logs: &[&[RoundMetrics]], path: &Path) -> Result<()> {
    let mut cells: BTreeMap<(String, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for log in logs {
        for m in log.iter() {
            let e = cells.entry((m.strategy.clone(), m.round)).or_default();
            e.0.push(m.entropy);
            e.1 = e.1.max(m.class_counts.len());
        }
    }
    let mut w = csv_writer(path)?;
    w.write_record(["strategy", "round", "mean", "ci_low", "ci_high", "n_seeds", "max_entropy"])
        .map_err(csv_err)?;
    for ((strategy, round), (values, classes)) in cells {
        let (mean, ci) = mean_ci(&values);
        w.write_record([
            strategy,
            round.to_string(),
            mean.to_string(),
            opt(ci.map(|c| c.0)),
            opt(ci.map(|c| c.1)),
            values.len().to_string(),
            (classes as f64).ln().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InspectFiles {
    pub scores: PathBuf,
    pub minima: PathBuf,
}

/// Trains the round-0 head of `seed` and dumps boundary scores of the
/// unlabeled pool: `boundary_scores.csv` (one row per sample) and
/// `dcsdb_minima.csv` (closest sample per class boundary).
pub fn cmd_inspect(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<InspectFiles> {
    cfg.validate()?;
    let ds = Dataset::load(&cfg.data)?;
    let mut pool = PoolState::split(ds.labels.clone(), ds.num_classes, cfg.pool.val_frac, &ds.test_idx, seed)?;
    pool.seed_initial(cfg.pool.initial_size, seed)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    let head = train(&ds.features, &ds.labels, pool.labeled(), pool.val_idx(), ds.num_classes, &train_cfg)?.head;
    let rows = pool.unlabeled();
    if rows.len() > 100_000 {
        log::warn!("inspect writes one CSV row per sample ({} rows)", rows.len());
    }
    let scores = BoundaryScorer::new(&head).scores(&ds.features, rows)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = InspectFiles {
        scores: out.join("boundary_scores.csv"),
        minima: out.join("dcsdb_minima.csv"),
    };

    let c = ds.num_classes;
    let mut w = csv_writer(&files.scores)?;
    let mut header = vec!["index".to_owned(), "label".to_owned(), "prediction".to_owned(), "ddb".to_owned()];
    header.extend((0..c).map(|k| format!("dcsdb_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (r, &i) in rows.iter().enumerate() {
        let mut record = vec![
            i.to_string(),
            ds.labels[i].to_string(),
            scores.predictions[r].to_string(),
            scores.ddb[r].to_string(),
        ];
        record.extend(scores.dcsdb_row(r).iter().map(f64::to_string));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&files.scores, e))?;

    let mut w = csv_writer(&files.minima)?;
    w.write_record(["class", "min_dcsdb", "index"]).map_err(csv_err)?;
    for k in 0..c {
        let column = scores.dcsdb_column(k);
        let best = column
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(rows[a.0].cmp(&rows[b.0])));
        if let Some((r, &v)) = best {
            w.write_record([k.to_string(), v.to_string(), rows[r].to_string()]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(&files.minima, e))?;
    Ok(files)
}
