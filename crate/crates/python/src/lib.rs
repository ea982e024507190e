//! Python bindings: `import pyalkit`.

use alkit::geometry::{dcsdb as dcsdb_scores, ddb as ddb_scores};
use alkit::pool::{entropy as entropy_of, imbalance_ratio as ratio_of, ClassDistribution, PoolState};
use alkit::rng::stream;
use alkit::simulator::ExperimentConfig;
use alkit::{Error, ErrorKind, FeatureMatrix, LinearHead, QueryContext, StrategyConfig, StrategyKind, TrainConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(pyalkit, AlkitError, PyValueError, "Base class of all pyalkit errors.");
create_exception!(pyalkit, ConfigError, AlkitError);
create_exception!(pyalkit, DataError, AlkitError);
create_exception!(pyalkit, ContractError, AlkitError);
create_exception!(pyalkit, DivergenceError, AlkitError);

fn py_err(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", e.kind().tag());
    match e.kind() {
        ErrorKind::Config => ConfigError::new_err(msg),
        ErrorKind::Data => DataError::new_err(msg),
        ErrorKind::Contract => ContractError::new_err(msg),
        ErrorKind::Divergence => DivergenceError::new_err(msg),
    }
}

fn matrix(rows: Vec<Vec<f32>>) -> PyResult<FeatureMatrix> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(DataError::new_err("ragged feature rows"));
    }
    let n = rows.len();
    FeatureMatrix::new(n, dim, rows.into_iter().flatten().collect()).map_err(py_err)
}

fn nested(m: &FeatureMatrix) -> Vec<Vec<f32>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Per-class counts of a long-tailed pool, largest class first.
#[pyfunction]
fn longtail_counts(num_classes: usize, max_per_class: usize, ratio: f64) -> PyResult<Vec<usize>> {
    alkit::longtail_counts(num_classes, max_per_class, ratio).map_err(py_err)
}

/// Gaussian-cluster pool; returns `(features, labels)`.
#[pyfunction]
#[pyo3(signature = (num_classes, feature_dim, max_per_class, imbalance_ratio, class_separation=3.0, noise_sigma=1.0, seed=0))]
fn synth(
    num_classes: usize,
    feature_dim: usize,
    max_per_class: usize,
    imbalance_ratio: f64,
    class_separation: f64,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f32>>, Vec<u32>)> {
    let spec = alkit::SynthSpec {
        num_classes,
        feature_dim,
        max_per_class,
        imbalance_ratio,
        class_separation,
        noise_sigma,
        seed,
    };
    let pool = alkit::generate(&spec).map_err(py_err)?;
    Ok((nested(&pool.features), pool.labels))
}

/// A trained linear classifier.
#[pyclass(name = "Head", module = "pyalkit", frozen)]
struct PyHead {
    inner: LinearHead,
}

#[pymethods]
impl PyHead {
    /// `weights` is `C` rows of length `d`.
    #[new]
    fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> PyResult<Self> {
        let dim = weights.first().map_or(0, Vec::len);
        if weights.iter().any(|r| r.len() != dim) {
            return Err(DataError::new_err("ragged weight rows"));
        }
        let c = weights.len();
        let inner = LinearHead::new(c, dim, weights.into_iter().flatten().collect(), bias).map_err(py_err)?;
        Ok(PyHead { inner })
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn weights(&self) -> Vec<Vec<f64>> {
        (0..self.inner.num_classes()).map(|c| self.inner.weight_row(c).to_vec()).collect()
    }

    #[getter]
    fn bias(&self) -> Vec<f64> {
        self.inner.bias().to_vec()
    }

    fn logits(&self, x: Vec<f32>) -> PyResult<Vec<f64>> {
        self.inner.logits(&x).map_err(py_err)
    }

    fn predict(&self, features: Vec<Vec<f32>>) -> PyResult<Vec<u32>> {
        self.inner.predict(&matrix(features)?).map_err(py_err)
    }

    /// Distance of each row to the nearest decision boundary.
    fn ddb(&self, features: Vec<Vec<f32>>) -> PyResult<Vec<f64>> {
        ddb_scores(&self.inner, &matrix(features)?).map_err(py_err)
    }

    /// Distance of each row to the boundary of class `c`.
    fn dcsdb(&self, features: Vec<Vec<f32>>, c: usize) -> PyResult<Vec<f64>> {
        dcsdb_scores(&self.inner, &matrix(features)?, c).map_err(py_err)
    }

    fn accuracy(&self, features: Vec<Vec<f32>>, labels: Vec<u32>) -> PyResult<f64> {
        let m = matrix(features)?;
        let rows: Vec<usize> = (0..m.rows()).collect();
        self.inner.accuracy(&m, &rows, &labels).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Head(num_classes={}, dim={})", self.inner.num_classes(), self.inner.dim())
    }
}

/// Trains a head on the `labeled` rows, early-stopping on `val` rows.
#[pyfunction]
#[pyo3(signature = (features, labels, labeled, val, num_classes, epochs=None, learning_rate=None, batch_size=None, weight_decay=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    features: Vec<Vec<f32>>,
    labels: Vec<u32>,
    labeled: Vec<usize>,
    val: Vec<usize>,
    num_classes: usize,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    weight_decay: Option<f64>,
    seed: u64,
) -> PyResult<PyHead> {
    let m = matrix(features)?;
    let mut cfg = TrainConfig::cifar10();
    if let Some(e) = epochs {
        cfg.epochs = e;
        cfg.early_stop_patience = cfg.early_stop_patience.min(e);
    }
    cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
    cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
    cfg.weight_decay = weight_decay.unwrap_or(cfg.weight_decay);
    cfg.seed = seed;
    let report = py
        .detach(|| alkit::train(&m, &labels, &labeled, &val, num_classes, &cfg))
        .map_err(py_err)?;
    Ok(PyHead { inner: report.head })
}

/// Runs one query of `strategy` over the rows that are neither labeled nor
/// in `val`.
#[pyfunction]
#[pyo3(signature = (strategy, features, labels, labeled, val, head, budget, seed=0, partitions=10, pooled_dim=512))]
#[allow(clippy::too_many_arguments)]
fn select(
    py: Python<'_>,
    strategy: &str,
    features: Vec<Vec<f32>>,
    labels: Vec<u32>,
    labeled: Vec<usize>,
    val: Vec<usize>,
    head: &PyHead,
    budget: usize,
    seed: u64,
    partitions: usize,
    pooled_dim: usize,
) -> PyResult<Vec<usize>> {
    let kind: StrategyKind = strategy.parse().map_err(py_err)?;
    let m = matrix(features)?;
    let c = head.inner.num_classes();
    let mut pool = PoolState::with_splits(labels, c, &val, &[]).map_err(py_err)?;
    pool.restore(&labeled, labeled.len(), 0).map_err(py_err)?;
    let mut cfg = StrategyConfig::new(kind);
    cfg.partitions = partitions;
    cfg.pooled_dim = pooled_dim;
    let ctx = QueryContext {
        pool: &pool,
        features: &m,
        head: &head.inner,
    };
    let q = py
        .detach(|| alkit::select(&cfg, &ctx, budget, &mut stream(seed, "strategy")))
        .map_err(py_err)?;
    Ok(q.indices)
}

/// Largest over smallest class count.
#[pyfunction]
fn imbalance_ratio(counts: Vec<u64>) -> PyResult<f64> {
    ratio_of(&ClassDistribution::new(counts)).map(|i| i.ratio).map_err(py_err)
}

/// Shannon entropy (nats) of the class counts.
#[pyfunction]
fn entropy(counts: Vec<u64>) -> PyResult<f64> {
    entropy_of(&ClassDistribution::new(counts)).map_err(py_err)
}

/// Runs an experiment described by a TOML document. Returns, per
/// `(strategy, seed)` run, the list of per-round records as dicts.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None, overrides=Vec::new()))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    out_dir: Option<std::path::PathBuf>,
    overrides: Vec<String>,
) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let mut cfg = ExperimentConfig::from_toml(config, &overrides).map_err(py_err)?;
    if out_dir.is_some() {
        cfg.run.out_dir = out_dir;
    }
    let outcome = py.detach(|| alkit::run_experiment(&cfg)).map_err(py_err)?;
    let loads = py.import("json")?.getattr("loads")?;
    let mut out = Vec::new();
    for run in outcome.runs {
        let records = run.outcome.map_err(py_err)?;
        let text = serde_json::to_string(&records).map_err(|e| AlkitError::new_err(e.to_string()))?;
        out.push(loads.call1((text,))?);
    }
    Ok(out)
}

#[pymodule]
fn pyalkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("AlkitError", py.get_type::<AlkitError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("ContractError", py.get_type::<ContractError>())?;
    m.add("DivergenceError", py.get_type::<DivergenceError>())?;
    m.add_class::<PyHead>()?;
    m.add_function(wrap_pyfunction!(longtail_counts, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(imbalance_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
