//! Python bindings. Arrays cross the boundary as nested lists of floats.

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;
use wdm_core::autodiff::Tensor;
use wdm_core::cli::SweepConfig;
use wdm_core::datasets::{glyph_mi as core_glyph_mi, DatasetSpec, GlyphDatasetSpec, Layout, PairDataset};
use wdm_core::models::{encode, load_checkpoint, save_checkpoint, CriticState, EncoderConfig, Side};
use wdm_core::objectives::{self, ObjectiveConfig, ObjectiveKind};
use wdm_core::ot::{self, DiscreteDistribution, DiscreteJoint, GroundMetric, Point};
use wdm_core::probe::{evaluate_model, ProbeResult};
use wdm_core::training::{self, Optimizer, TrainConfig};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(err("rows have different lengths"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(err)
}

fn rows(a: &Tensor) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn metric(name: &str) -> PyResult<GroundMetric> {
    match name {
        "l1" => Ok(GroundMetric::euclidean_l1_product()),
        "l2" => Ok(GroundMetric::euclidean_l2_product()),
        "hamming" => Ok(GroundMetric::hamming()),
        other => Err(err(format!("unknown metric {other:?}, expected l1, l2 or hamming"))),
    }
}

fn objective_kind(name: &str) -> PyResult<ObjectiveKind> {
    match name {
        "cpc" => Ok(ObjectiveKind::Cpc),
        "wpc" => Ok(ObjectiveKind::Wpc),
        "wdm_dual" => Ok(ObjectiveKind::WdmDual),
        other => Err(err(format!("unknown objective {other:?}"))),
    }
}

fn distribution(points: Vec<Vec<f64>>, mass: Vec<f64>) -> PyResult<DiscreteDistribution> {
    DiscreteDistribution::new(points.into_iter().map(Point::vector).collect(), mass).map_err(err)
}

/// MI in nats of a joint probability table.
#[pyfunction]
fn mi_discrete(mass: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(ot::mi_discrete(&DiscreteJoint::from_labels(matrix(mass)?).map_err(err)?))
}

/// W1 between two weighted point clouds.
#[pyfunction]
#[pyo3(signature = (p_points, p_mass, q_points, q_mass, metric_name = "l1"))]
fn wasserstein(
    p_points: Vec<Vec<f64>>,
    p_mass: Vec<f64>,
    q_points: Vec<Vec<f64>>,
    q_mass: Vec<f64>,
    metric_name: &str,
) -> PyResult<f64> {
    let (p, q) = (distribution(p_points, p_mass)?, distribution(q_points, q_mass)?);
    ot::wasserstein_discrete(&p, &q, &metric(metric_name)?).map_err(err)
}

/// W1 between a joint over vector supports and the product of its marginals.
#[pyfunction]
#[pyo3(signature = (x_points, y_points, mass, metric_name = "l1"))]
fn wdm_discrete(x_points: Vec<Vec<f64>>, y_points: Vec<Vec<f64>>, mass: Vec<Vec<f64>>, metric_name: &str) -> PyResult<f64> {
    let joint = DiscreteJoint::new(
        x_points.into_iter().map(Point::vector).collect(),
        y_points.into_iter().map(Point::vector).collect(),
        matrix(mass)?,
    )
    .map_err(err)?;
    ot::wdm_discrete(&joint, &metric(metric_name)?).map_err(err)
}

#[pyfunction]
fn glyph_mi(alphabet_sizes: Vec<usize>) -> f64 {
    core_glyph_mi(&alphabet_sizes)
}

#[pyfunction]
fn cpc_objective(scores: Vec<Vec<f64>>) -> PyResult<f64> {
    objectives::cpc_objective(&matrix(scores)?).map_err(err)
}

#[pyfunction]
fn mi_estimate(objective: f64, batch_size: usize) -> f64 {
    objectives::mi_estimate(objective, batch_size)
}

#[pyfunction]
fn wpc_objective(scores: Vec<Vec<f64>>, gp: f64, penalty_coeff: f64) -> PyResult<f64> {
    objectives::wpc_objective(&matrix(scores)?, gp, penalty_coeff).map_err(err)
}

#[pyfunction]
fn wdm_dual_objective(scores: Vec<Vec<f64>>, gp: f64, penalty_coeff: f64) -> PyResult<f64> {
    objectives::wdm_dual_objective(&matrix(scores)?, gp, penalty_coeff).map_err(err)
}

/// Paired images with known mutual information.
#[pyclass(name = "Dataset", module = "wdm", frozen)]
struct PyDataset {
    inner: PairDataset,
}

#[pymethods]
impl PyDataset {
    /// Glyph pairs. `layout` is "stacked" or "spatial"; `grid` is required for spatial.
    #[staticmethod]
    #[pyo3(signature = (alphabet_sizes, n_samples, cell_px = 8, seed = 0, jitter = 0.0, layout = "stacked", grid = None))]
    fn glyph(
        py: Python<'_>,
        alphabet_sizes: Vec<usize>,
        n_samples: usize,
        cell_px: usize,
        seed: u64,
        jitter: f64,
        layout: &str,
        grid: Option<(usize, usize)>,
    ) -> PyResult<Self> {
        let layout = match layout {
            "stacked" => Layout::Stacked,
            "spatial" => Layout::Spatial,
            other => return Err(err(format!("unknown layout {other:?}"))),
        };
        let spec = GlyphDatasetSpec { layout, alphabet_sizes, grid, cell_px, n_samples, seed, jitter };
        let inner = py.detach(|| wdm_core::datasets::generate_glyph_pairs(&spec)).map_err(err)?;
        Ok(Self { inner })
    }

    /// Any dataset spec in its JSON form.
    #[staticmethod]
    fn from_json(py: Python<'_>, spec: &str) -> PyResult<Self> {
        let spec: DatasetSpec = serde_json::from_str(spec).map_err(err)?;
        let inner = py.detach(|| spec.generate()).map_err(err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn image_shape(&self) -> (usize, usize, usize) {
        let [h, w, c] = self.inner.image_shape;
        (h, w, c)
    }

    #[getter]
    fn mi_certificate(&self) -> f64 {
        self.inner.mi_certificate
    }

    #[getter]
    fn factor_cardinalities(&self) -> Vec<usize> {
        self.inner.factor_cardinalities.clone()
    }

    /// Flattened `x` images, one row per sample.
    fn x(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.x.mapv(f64::from))
    }

    fn y(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.y.mapv(f64::from))
    }

    fn labels(&self) -> Vec<Vec<u32>> {
        self.inner.z.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn shuffled(&self, seed: u64) -> Self {
        Self { inner: self.inner.with_shuffled_pairs(seed) }
    }
}

fn probe_dict<'py>(py: Python<'py>, r: &ProbeResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean_accuracy", r.mean_accuracy)?;
    d.set_item("per_factor_accuracy", r.per_factor_accuracy.clone())?;
    d.set_item("n_train", r.n_train.clone())?;
    d.set_item("n_test", r.n_test.clone())?;
    d.set_item("factor_cardinalities", r.factor_cardinalities.clone())?;
    d.set_item("degenerate", r.degenerate.clone())?;
    Ok(d)
}

/// Trained bilinear critic.
#[pyclass(name = "Critic", module = "wdm", frozen)]
struct PyCritic {
    inner: CriticState,
}

#[pymethods]
impl PyCritic {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_checkpoint(path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(path, &self.inner).map_err(err)
    }

    fn checksum(&self) -> u64 {
        self.inner.checksum()
    }

    #[pyo3(signature = (batch, side = "x"))]
    fn encode(&self, batch: Vec<Vec<f64>>, side: &str) -> PyResult<Vec<Vec<f64>>> {
        let side = match side {
            "x" => Side::X,
            "y" => Side::Y,
            other => return Err(err(format!("side must be \"x\" or \"y\", got {other:?}"))),
        };
        Ok(rows(&encode(&self.inner, side, &matrix(batch)?).map_err(err)?))
    }

    /// Linear probe of the `x` representations against the dataset factors.
    #[pyo3(signature = (dataset, split_seed = 0))]
    fn probe<'py>(&self, py: Python<'py>, dataset: &PyDataset, split_seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let r = py.detach(|| evaluate_model(&self.inner, &dataset.inner, split_seed)).map_err(err)?;
        probe_dict(py, &r)
    }
}

/// Trains a critic and returns it with a dict holding the log.
#[pyfunction]
#[pyo3(signature = (
    dataset, objective = "cpc", hidden_widths = vec![64], repr_dim = 16, steps = 2000,
    batch_size = 64, learning_rate = 1e-3, seed = 0, eval_every = 200, optimizer = "adam",
    penalty_coeff = 10.0,
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    objective: &str,
    hidden_widths: Vec<usize>,
    repr_dim: usize,
    steps: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
    eval_every: usize,
    optimizer: &str,
    penalty_coeff: f64,
) -> PyResult<(PyCritic, Bound<'py, PyDict>)> {
    let optimizer = match optimizer {
        "adam" => Optimizer::AdaptiveMoment,
        "sgd" => Optimizer::PlainSgd,
        other => return Err(err(format!("unknown optimizer {other:?}"))),
    };
    let kind = objective_kind(objective)?;
    let encoder = EncoderConfig { hidden_widths, repr_dim, ..EncoderConfig::mlp(dataset.inner.image_shape) };
    let obj = ObjectiveConfig { penalty_coeff, ..ObjectiveConfig::new(kind, batch_size) };
    let cfg = TrainConfig { steps, batch_size, learning_rate, seed, eval_every, optimizer };
    let (state, log) = py.detach(|| training::train(&dataset.inner, &encoder, &obj, &cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("step", log.records.iter().map(|r| r.step).collect::<Vec<_>>())?;
    d.set_item("objective", log.records.iter().map(|r| r.objective).collect::<Vec<_>>())?;
    d.set_item("mi_estimate", log.records.iter().map(|r| r.mi_estimate).collect::<Vec<_>>())?;
    d.set_item("gp", log.records.iter().map(|r| r.gp).collect::<Vec<_>>())?;
    d.set_item("max_mi_estimate", log.max_mi_estimate)?;
    d.set_item("final_mi_estimate", log.final_mi_estimate(0.1))?;
    d.set_item("ordering_checks", log.ordering_checks)?;
    Ok((PyCritic { inner: state }, d))
}

/// Runs a sweep config file and returns the paths it wrote.
#[pyfunction]
fn run_sweep<'py>(py: Python<'py>, config_path: PathBuf, out_dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SweepConfig::from_file(&config_path).map_err(err)?;
    let out = py.detach(|| wdm_core::cli::run_sweep(&cfg, &out_dir)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("csv", out.csv_path)?;
    d.set_item("manifest", out.manifest_path)?;
    d.set_item("plot", out.plot_path)?;
    d.set_item("rows", out.rows)?;
    d.set_item("failures", out.failures.len())?;
    Ok(d)
}

#[pymodule]
fn wdm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyCritic>()?;
    m.add_function(wrap_pyfunction!(mi_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(wdm_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(glyph_mi, m)?)?;
    m.add_function(wrap_pyfunction!(cpc_objective, m)?)?;
    m.add_function(wrap_pyfunction!(mi_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(wpc_objective, m)?)?;
    m.add_function(wrap_pyfunction!(wdm_dual_objective, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
