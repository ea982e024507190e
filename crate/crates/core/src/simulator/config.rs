use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linear::TrainConfig;
use crate::strategies::{StrategyConfig, StrategyKind};
use crate::synth::SynthSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// A generated long-tail pool plus a balanced test set from the same
    /// class means.
    Synth {
        num_classes: usize,
        feature_dim: usize,
        max_per_class: usize,
        imbalance_ratio: f64,
        class_separation: f64,
        noise_sigma: f64,
        seed: u64,
        test_per_class: usize,
    },
    /// Feature and label array files. The test set comes from separate
    /// files or, failing that, a fixed `test_frac` share of the rows.
    Files {
        features: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_features: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_labels: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_frac: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        num_classes: Option<usize>,
    },
}

impl DataConfig {
    pub fn synth_spec(&self) -> Option<(SynthSpec, usize)> {
        match *self {
            DataConfig::Synth {
                num_classes,
                feature_dim,
                max_per_class,
                imbalance_ratio,
                class_separation,
                noise_sigma,
                seed,
                test_per_class,
            } => Some((
                SynthSpec {
                    num_classes,
                    feature_dim,
                    max_per_class,
                    imbalance_ratio,
                    class_separation,
                    noise_sigma,
                    seed,
                },
                test_per_class,
            )),
            DataConfig::Files { .. } => None,
        }
    }

    pub fn from_synth(spec: &SynthSpec, test_per_class: usize) -> Self {
        DataConfig::Synth {
            num_classes: spec.num_classes,
            feature_dim: spec.feature_dim,
            max_per_class: spec.max_per_class,
            imbalance_ratio: spec.imbalance_ratio,
            class_separation: spec.class_separation,
            noise_sigma: spec.noise_sigma,
            seed: spec.seed,
            test_per_class,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    /// Share of the non-test rows held out for early stopping.
    pub val_frac: f64,
    pub initial_size: usize,
    pub budget: usize,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategyNames {
    One(String),
    Many(Vec<String>),
}

fn default_partitions() -> usize {
    10
}

fn default_pooled_dim() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub name: StrategyNames,
    #[serde(default = "default_partitions")]
    pub partitions: usize,
    #[serde(default = "default_pooled_dim")]
    pub pooled_dim: usize,
}

impl StrategySection {
    pub fn kinds(&self) -> Result<Vec<StrategyKind>> {
        let names = match &self.name {
            StrategyNames::One(s) => vec![s.clone()],
            StrategyNames::Many(v) => v.clone(),
        };
        if names.is_empty() {
            return Err(Error::Config("strategy.name lists no strategies".into()));
        }
        let mut kinds = Vec::with_capacity(names.len());
        for n in names {
            let k: StrategyKind = n.parse()?;
            if kinds.contains(&k) {
                return Err(Error::Config(format!("strategy `{k}` listed twice")));
            }
            kinds.push(k);
        }
        Ok(kinds)
    }

    pub fn for_kind(&self, kind: StrategyKind) -> StrategyConfig {
        StrategyConfig {
            name: kind,
            partitions: self.partitions,
            pooled_dim: self.pooled_dim,
        }
    }
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Seed runs executed concurrently.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub pool: PoolConfig,
    pub train: TrainConfig,
    pub strategy: StrategySection,
    pub run: RunConfig,
}

/// The parts of a config that determine one seed run's results.
#[derive(Debug, Clone, Serialize)]
pub struct RunIdentity<'a> {
    pub data: &'a DataConfig,
    pub pool: &'a PoolConfig,
    pub train: &'a TrainConfig,
    pub strategy: StrategyConfig,
    pub seed: u64,
}

impl RunIdentity<'_> {
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (key-sorted) JSON form.
    pub fn hash(&self) -> String {
        hash_value(&self.to_value())
    }
}

pub fn hash_value(v: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

impl ExperimentConfig {
    /// Parses a TOML document, then applies dotted `key=value` overrides.
    /// Overrides must name keys present once defaults are filled in.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_parse_error(text, &e))?;
        if overrides.is_empty() {
            return Ok(cfg);
        }
        let mut value = toml::Value::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("after overrides: {}", e.message())))
    }

    /// Reads a config file; relative data paths are taken relative to it.
    pub fn from_file(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let DataConfig::Files {
            features,
            labels,
            test_features,
            test_labels,
            ..
        } = &mut self.data
        {
            for p in [Some(features), Some(labels), test_features.as_mut(), test_labels.as_mut()]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn identity(&self, kind: StrategyKind, seed: u64) -> RunIdentity<'_> {
        RunIdentity {
            data: &self.data,
            pool: &self.pool,
            train: &self.train,
            strategy: self.strategy.for_kind(kind),
            seed,
        }
    }

    /// Checks everything that does not need the data itself.
    pub fn validate(&self) -> Result<()> {
        let p = &self.pool;
        if p.rounds == 0 {
            return Err(Error::Config("pool.rounds must be at least 1".into()));
        }
        if p.budget == 0 || p.initial_size == 0 {
            return Err(Error::Config("pool.budget and pool.initial_size must be positive".into()));
        }
        if !(p.val_frac > 0.0 && p.val_frac < 1.0) {
            return Err(Error::Config(format!("pool.val_frac {} must lie in (0, 1)", p.val_frac)));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds is empty".into()));
        }
        let mut seen = self.run.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.run.seeds.len() {
            return Err(Error::Config("run.seeds contains duplicates".into()));
        }
        if self.run.jobs == 0 {
            return Err(Error::Config("run.jobs must be at least 1".into()));
        }
        self.train.validate()?;
        for k in self.strategy.kinds()? {
            self.strategy.for_kind(k).validate()?;
        }
        match &self.data {
            DataConfig::Synth { .. } => {
                let (spec, _) = self.data.synth_spec().expect("synth");
                spec.validate()?;
            }
            DataConfig::Files { test_frac, test_features, test_labels, .. } => {
                if test_features.is_some() != test_labels.is_some() {
                    return Err(Error::Config("data.test_features and data.test_labels go together".into()));
                }
                match (test_features, test_frac) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config("give either test files or data.test_frac, not both".into()))
                    }
                    (None, None) => return Err(Error::Config("data needs test files or data.test_frac".into())),
                    (None, Some(f)) if !(*f > 0.0 && *f < 1.0) => {
                        return Err(Error::Config(format!("data.test_frac {f} must lie in (0, 1)")))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Checks `|s0| + K b` against the number of trainable (non-test,
    /// non-validation) rows.
    pub fn check_capacity(&self, non_test_rows: usize) -> Result<()> {
        let n_val = (self.pool.val_frac * non_test_rows as f64).round() as usize;
        let pool = non_test_rows.saturating_sub(n_val);
        let need = self.pool.initial_size + self.pool.rounds * self.pool.budget;
        if need > pool {
            return Err(Error::Config(format!(
                "pool.initial_size + pool.rounds * pool.budget = {need} exceeds the {pool} trainable samples"
            )));
        }
        Ok(())
    }
}

fn config_parse_error(text: &str, e: &toml::de::Error) -> Error {
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            Error::Config(format!("line {line}, column {column}: {}", e.message()))
        }
        None => Error::Config(e.message().to_owned()),
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, else as a string.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_owned()),
    };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{}` is not a section", parts[..depth].join("."))))?;
        let slot = table
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("override `{key}`: unknown key `{}`", parts[..=depth].join("."))))?;
        if depth + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    Err(Error::Config(format!("override `{assignment}` has an empty key")))
}
