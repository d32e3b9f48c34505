//! Python bindings. Matrices cross the boundary as lists of rows; structured
//! results come back as plain dicts and lists.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use knobforge::cluster::{self, ClusterSpec, ClustererKind};
use knobforge::ingest::{drop_constant_columns, load_repository, ColumnKind, SchemaHint, WorkloadRepository};
use knobforge::mapping::{self, Distance};
use knobforge::pipeline::{self, PipelineConfig};
use knobforge::regress::{self, GprHyperparams, MlpHyperparams, RegressorSpec, RfHyperparams, TrainedRegressor};
use knobforge::scaling::fit_scaler;
use knobforge::{eval, factor, pruning, synth, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), d, &flat))
}

/// Serializes through JSON so Python gets ordinary dicts and lists.
fn to_object<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyfunction]
fn mape(y_true: Vec<f64>, y_pred: Vec<f64>) -> PyResult<f64> {
    eval::mape(&y_true, &y_pred).map_err(to_py)
}

#[pyfunction]
fn mse(y_true: Vec<f64>, y_pred: Vec<f64>) -> PyResult<f64> {
    eval::mse(&y_true, &y_pred).map_err(to_py)
}

/// Eigenvalues and retained-factor count for metric rows `x` (one row per metric).
#[pyfunction]
fn factor_analysis(py: Python<'_>, names: Vec<String>, x: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
    let fa = factor::factor_analysis(&names, &matrix(&x)?).map_err(to_py)?;
    to_object(py, &fa)
}

/// Returns `(labels, inertia)`.
#[pyfunction]
#[pyo3(signature = (points, k, seed=0, n_restarts=10))]
fn kmeans(points: Vec<Vec<f64>>, k: usize, seed: u64, n_restarts: usize) -> PyResult<(Vec<usize>, f64)> {
    let m = cluster::kmeans::kmeans_fit(&matrix(&points)?, k, seed, n_restarts).map_err(to_py)?;
    Ok((m.labels, m.inertia))
}

/// Returns `(labels, log_likelihood)`.
#[pyfunction]
#[pyo3(signature = (points, k, seed=0, n_restarts=10))]
fn gmm(points: Vec<Vec<f64>>, k: usize, seed: u64, n_restarts: usize) -> PyResult<(Vec<usize>, f64)> {
    let m = cluster::gmm::gmm_fit(&matrix(&points)?, k, seed, n_restarts).map_err(to_py)?;
    Ok((m.labels, m.log_likelihood))
}

#[pyfunction]
fn silhouette_score(points: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    cluster::silhouette::silhouette_score(&matrix(&points)?, &labels).map_err(to_py)
}

/// Writes a synthetic corpus into `out_dir` and returns the path of its
/// pipeline config.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=0, n_workloads=None, noise_sigma=None))]
fn synthesize(out_dir: PathBuf, seed: u64, n_workloads: Option<usize>, noise_sigma: Option<f64>) -> PyResult<PathBuf> {
    let mut spec = synth::SynthSpec {
        seed,
        ..synth::SynthSpec::default()
    };
    if let Some(n) = n_workloads {
        spec.n_workloads = n;
    }
    if let Some(s) = noise_sigma {
        spec.noise_sigma = s;
    }
    spec.validate().map_err(to_py)?;
    let corpus = synth::generate_corpus(&spec).map_err(to_py)?;
    let layout = synth::write_corpus(&corpus, &out_dir).map_err(to_py)?;
    let cfg = PipelineConfig {
        offline_paths: layout.offline,
        online_b_paths: layout.online_b,
        online_c_paths: layout.online_c,
        test_path: Some(layout.test),
        schema_path: Some(layout.schema),
        seed,
        ..PipelineConfig::default()
    };
    let path = out_dir.join("pipeline.json");
    let text = serde_json::to_string_pretty(&cfg).map_err(|e| PyValueError::new_err(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Runs the two-stage pipeline from a JSON config and returns the summary.
/// Outputs are written when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir=None, seed=None))]
fn run_pipeline(
    py: Python<'_>,
    config_path: PathBuf,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let summary = py
        .detach(|| -> knobforge::Result<_> {
            let mut cfg = PipelineConfig::from_json_file(&config_path)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let run = pipeline::run_pipeline(&cfg)?;
            if let Some(dir) = &out_dir {
                run.write_outputs(dir)?;
            }
            Ok(run.summary())
        })
        .map_err(to_py)?;
    to_object(py, &summary)
}

/// Workloads loaded from CSV files.
#[pyclass(frozen, module = "knobforge")]
struct Repository {
    inner: WorkloadRepository,
}

#[pymethods]
impl Repository {
    #[staticmethod]
    #[pyo3(signature = (paths, schema=None))]
    fn load(paths: Vec<PathBuf>, schema: Option<PathBuf>) -> PyResult<Self> {
        let hint = match schema {
            Some(p) => SchemaHint::from_json_file(&p).map_err(to_py)?,
            None => SchemaHint::default(),
        };
        Ok(Self {
            inner: load_repository(&paths, &hint).map_err(to_py)?,
        })
    }

    #[getter]
    fn workload_ids(&self) -> Vec<String> {
        self.inner.ids().map(str::to_owned).collect()
    }

    #[getter]
    fn knobs(&self) -> Vec<String> {
        self.inner.schema().names_of(ColumnKind::Knob)
    }

    #[getter]
    fn metrics(&self) -> Vec<String> {
        self.inner.schema().names_of(ColumnKind::Metric)
    }

    #[getter]
    fn total_rows(&self) -> usize {
        self.inner.total_rows()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Row-major values of one workload, columns in schema order.
    fn rows(&self, workload: &str) -> PyResult<Vec<Vec<f64>>> {
        let t = self.inner.require(workload).map_err(to_py)?;
        Ok((0..t.n_rows()).map(|r| t.row(r)).collect())
    }

    /// A copy without columns that are constant across every workload.
    fn without_constant_columns(&self) -> (Repository, Vec<String>) {
        let (inner, dropped) = drop_constant_columns(&self.inner);
        (Repository { inner }, dropped)
    }

    /// Pruned metric set as `{"k": ..., "metrics": [...]}`.
    #[pyo3(signature = (clusterer="kmeans", k_min=2, k_max=15, seed=0))]
    fn prune(&self, py: Python<'_>, clusterer: &str, k_min: usize, k_max: usize, seed: u64) -> PyResult<Py<PyAny>> {
        let kind: ClustererKind = clusterer.parse().map_err(to_py)?;
        let spec = ClusterSpec {
            kind,
            ..ClusterSpec::kmeans(seed)
        };
        let (_, pruned) = py
            .detach(|| pruning::prune_repository(&self.inner, &spec, k_min..=k_max))
            .map_err(to_py)?;
        to_object(py, &pruned)
    }

    /// Scores every workload of this repository against `target`, one of
    /// the workloads of `targets`.
    #[pyo3(signature = (targets, target, metrics, distance="euclidean"))]
    fn map(
        &self,
        py: Python<'_>,
        targets: &Repository,
        target: &str,
        metrics: Vec<String>,
        distance: &str,
    ) -> PyResult<Py<PyAny>> {
        let distance: Distance = distance.parse().map_err(to_py)?;
        let keep: std::collections::BTreeSet<&String> = metrics.iter().collect();
        let schema = Arc::new(
            self.inner
                .schema()
                .retain(|c| c.kind != ColumnKind::Metric || keep.contains(&c.name)),
        );
        let result = py
            .detach(|| -> knobforge::Result<_> {
                let repo = self.inner.project(schema.clone())?;
                let t = targets.inner.require(target)?.project(schema.clone())?;
                let tables: Vec<_> = repo.tables().collect();
                let scaler = fit_scaler(&tables, &schema.feature_names())?;
                mapping::map_workload(&t, &repo, &metrics, &scaler, distance)
            })
            .map_err(to_py)?;
        to_object(py, &result)
    }
}

/// A fitted latency model.
#[pyclass(frozen, module = "knobforge")]
struct Regressor {
    inner: TrainedRegressor,
}

#[pymethods]
impl Regressor {
    /// `kind` is `gpr`, `rf` or `nn`. Unused hyperparameters are ignored.
    #[staticmethod]
    #[pyo3(signature = (kind, x, y, feature_names=None, seed=0, alpha=None, n_trees=None, max_depth=None, epochs=None))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        kind: &str,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        feature_names: Option<Vec<String>>,
        seed: u64,
        alpha: Option<f64>,
        n_trees: Option<usize>,
        max_depth: Option<usize>,
        epochs: Option<usize>,
    ) -> PyResult<Self> {
        let spec = match kind {
            "gpr" => {
                let mut h = GprHyperparams::default();
                h.alpha = alpha.unwrap_or(h.alpha);
                RegressorSpec::gpr(h)
            }
            "rf" => {
                let mut h = RfHyperparams::default();
                h.n_trees = n_trees.unwrap_or(h.n_trees);
                h.max_depth = max_depth.unwrap_or(h.max_depth);
                RegressorSpec::random_forest(h, seed)
            }
            "nn" => {
                let mut h = MlpHyperparams::default();
                h.epochs = epochs.unwrap_or(h.epochs);
                RegressorSpec::mlp(h, seed)
            }
            other => return Err(PyValueError::new_err(format!("unknown model kind `{other}`"))),
        };
        let x = matrix(&x)?;
        let names = feature_names.unwrap_or_else(|| (0..x.ncols()).map(|i| format!("x{i}")).collect());
        let inner = py.detach(|| regress::fit(&spec, &x, &y, &names)).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict(&matrix(&x)?).map_err(to_py)
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: TrainedRegressor::from_json(text).map_err(to_py)?,
        })
    }
}

#[pymodule]
#[pyo3(name = "knobforge")]
fn knobforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(factor_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(gmm, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette_score, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_class::<Repository>()?;
    m.add_class::<Regressor>()?;
    Ok(())
}
