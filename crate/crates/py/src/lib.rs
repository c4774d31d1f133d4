//! Python bindings: point clouds, graph construction, eigenbases, the
//! synthetic dataset, the model, training and the efficiency metrics.
//!
//! Matrices cross the boundary as lists of rows. Structured results
//! (configs, reports) are returned as plain dicts.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use virso_core::autodiff::Tensor;
use virso_core::bench::{self, Scope, TelemetryTrace};
use virso_core::graph::{self as vg, VknnConfig};
use virso_core::model::{self as vm, Variant, VirsoConfig};
use virso_core::spectral::{self as sp, ModeSelection};
use virso_core::synth::{self, SynthSpec};
use virso_core::train::{self as tr, Schedule};

create_exception!(virso, VirsoError, PyException);

fn err(e: virso_core::Error) -> PyErr {
    VirsoError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| VirsoError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| VirsoError::new_err(e.to_string()))
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn tensor(rows: &[Vec<f64>]) -> PyResult<Tensor> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(VirsoError::new_err("expected a non-empty list of equal-length rows"));
    }
    Ok(Tensor::from_rows(rows))
}

#[pyclass(name = "PointCloud", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPointCloud(vg::PointCloud);

#[pymethods]
impl PyPointCloud {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        vg::PointCloud::from_rows(&rows).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.0.len()).map(|i| self.0.point(i).to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("PointCloud(n={}, dim={})", self.0.len(), self.0.dim())
    }
}

#[pyclass(name = "Graph", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph(vg::Graph);

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn knn(points: &PyPointCloud, k: usize) -> PyResult<Self> {
        vg::build_knn(&points.0, k).map(Self).map_err(err)
    }

    #[staticmethod]
    fn radius(points: &PyPointCloud, r: f64) -> PyResult<Self> {
        vg::build_radius(&points.0, r).map(Self).map_err(err)
    }

    /// Variable-K graph; returns the graph and the per-node neighbor counts.
    #[staticmethod]
    #[pyo3(signature = (points, k_min, k_max, density_radius, alpha_floor=1))]
    fn vknn(points: &PyPointCloud, k_min: usize, k_max: usize, density_radius: f64, alpha_floor: usize) -> PyResult<(Self, Vec<usize>)> {
        let cfg = VknnConfig { k_min, k_max, alpha_floor, density_radius };
        let v = vg::build_vknn(&points.0, &cfg).map_err(err)?;
        Ok((Self(v.graph), v.k_per_node))
    }

    /// Copy carrying normalized inverse-distance edge weights.
    fn with_edge_weights(&self, points: &PyPointCloud) -> PyResult<Self> {
        vg::compute_edge_weights(&self.0, &points.0).map(Self).map_err(err)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.node_count()
    }

    #[getter]
    fn undirected_edge_count(&self) -> usize {
        self.0.undirected_edge_count()
    }

    /// Directed `(dst, src)` pairs, both directions present.
    fn edges(&self) -> Vec<(usize, usize)> {
        self.0.edges().to_vec()
    }

    fn weights(&self) -> Option<Vec<f64>> {
        self.0.weights().map(<[f64]>::to_vec)
    }

    fn degree(&self, u: usize) -> PyResult<usize> {
        if u >= self.0.node_count() {
            return Err(VirsoError::new_err(format!("node {u} out of range")));
        }
        Ok(self.0.degree(u))
    }

    fn content_hash(&self) -> String {
        self.0.content_hash()
    }

    fn __repr__(&self) -> String {
        format!("Graph(nodes={}, edges={})", self.0.node_count(), self.0.undirected_edge_count())
    }
}

#[pyclass(name = "EigenBasis", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEigenBasis(sp::EigenBasis);

#[pymethods]
impl PyEigenBasis {
    /// `solver` is "dense" or "lobpcg"; `which` is "smallest" or "largest".
    #[staticmethod]
    #[pyo3(signature = (graph, modes, solver="dense", which="smallest", weighted=false, tol=1e-9, max_iter=3000, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn compute(
        graph: &PyGraph,
        modes: usize,
        solver: &str,
        which: &str,
        weighted: bool,
        tol: f64,
        max_iter: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let l = sp::normalized_laplacian(&graph.0, weighted).map_err(err)?;
        let selection = match which {
            "smallest" => ModeSelection::Smallest,
            "largest" => ModeSelection::Largest,
            other => return Err(VirsoError::new_err(format!("unknown mode selection {other:?}"))),
        };
        let basis = match solver {
            "dense" => sp::dense_eigen_select(&l, modes, selection),
            "lobpcg" => {
                let opts = sp::LobpcgOptions { tol, max_iter, seed, selection, ..Default::default() };
                sp::lobpcg(&l, modes, &opts).map(|r| r.basis)
            }
            other => return Err(VirsoError::new_err(format!("unknown solver {other:?}"))),
        };
        basis.map(Self).map_err(err)
    }

    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.0.sigma.clone()
    }

    /// n×m matrix of eigenvectors.
    #[getter]
    fn q(&self) -> Vec<Vec<f64>> {
        rows(&self.0.q)
    }

    fn gft(&self, values: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.0.gft(&tensor(&values)?).map(|t| rows(&t)).map_err(err)
    }

    fn igft(&self, coeffs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.0.igft(&tensor(&coeffs)?).map(|t| rows(&t)).map_err(err)
    }

    fn orthonormality_error(&self) -> f64 {
        self.0.orthonormality_error()
    }

    fn subspace_distance(&self, other: &PyEigenBasis) -> f64 {
        sp::subspace_distance(&self.0, &other.0)
    }

    fn __repr__(&self) -> String {
        format!("EigenBasis(n={}, modes={})", self.0.n(), self.0.m())
    }
}

#[pyclass(name = "Anchors", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAnchors(vg::AnchorEmbedding);

#[pymethods]
impl PyAnchors {
    /// Hop-distance embedding to `count` seeded anchors; `count` defaults to
    /// ceil(log2 n).
    #[staticmethod]
    #[pyo3(signature = (graph, count=None, seed=0))]
    fn compute(graph: &PyGraph, count: Option<usize>, seed: u64) -> PyResult<Self> {
        let count = count.unwrap_or_else(|| vg::default_anchor_count(graph.0.node_count()));
        vg::anchor_embeddings(&graph.0, count, seed).map(Self).map_err(err)
    }

    #[getter]
    fn ids(&self) -> Vec<usize> {
        self.0.anchor_ids.clone()
    }

    #[getter]
    fn h(&self) -> Vec<Vec<f64>> {
        rows(&self.0.h)
    }
}

/// Geometry the model runs on: coordinates, edges, basis and anchors.
#[pyclass(name = "GraphContext", frozen)]
struct PyGraphContext {
    ctx: vm::GraphContext,
    graph_hash: String,
}

#[pymethods]
impl PyGraphContext {
    #[new]
    #[pyo3(signature = (points, graph, basis=None, anchors=None))]
    fn new(points: &PyPointCloud, graph: &PyGraph, basis: Option<&PyEigenBasis>, anchors: Option<&PyAnchors>) -> PyResult<Self> {
        let ctx = vm::GraphContext::new(&points.0, &graph.0, basis.map(|b| &b.0), anchors.map(|a| &a.0)).map_err(err)?;
        Ok(Self { ctx, graph_hash: graph.0.content_hash() })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.ctx.node_count()
    }
}

#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    data: tr::Dataset,
    points: Option<vg::PointCloud>,
}

#[pymethods]
impl PyDataset {
    /// `inputs` holds one q-vector per sample, `targets` one n×C field per sample.
    #[new]
    fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        if inputs.len() != targets.len() {
            return Err(VirsoError::new_err("inputs and targets differ in length"));
        }
        let samples = inputs
            .into_iter()
            .zip(&targets)
            .enumerate()
            .map(|(id, (u_q, s))| Ok(tr::Sample { id, u_q, s: tensor(s)? }))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self { data: tr::Dataset::new(samples).map_err(err)?, points: None })
    }

    /// The densified synthetic geometry with manufactured fields.
    #[staticmethod]
    #[pyo3(signature = (spec=None))]
    fn synthetic(py: Python<'_>, spec: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let spec: SynthSpec = match spec {
            Some(s) => from_py(py, s)?,
            None => SynthSpec::default(),
        };
        let out = synth::generate_dataset(&spec).map_err(err)?;
        Ok(Self { data: out.dataset, points: Some(out.points) })
    }

    fn __len__(&self) -> usize {
        self.data.len()
    }

    /// `(n, q, channels)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.data.n, self.data.q, self.data.channels)
    }

    /// Point cloud of a synthetic dataset.
    fn points(&self) -> Option<PyPointCloud> {
        self.points.clone().map(PyPointCloud)
    }

    fn input(&self, i: usize) -> PyResult<Vec<f64>> {
        self.sample(i).map(|s| s.u_q.clone())
    }

    fn target(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        self.sample(i).map(|s| rows(&s.s))
    }

    /// Seeded train/val/test partition; returns three index lists.
    #[pyo3(signature = (fractions=(12.0 / 19.0, 3.0 / 19.0, 4.0 / 19.0), seed=0))]
    fn split(&self, fractions: (f64, f64, f64), seed: u64) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let s = tr::split_dataset(self.data.len(), [fractions.0, fractions.1, fractions.2], seed).map_err(err)?;
        Ok((s.train, s.val, s.test))
    }
}

impl PyDataset {
    fn sample(&self, i: usize) -> PyResult<&tr::Sample> {
        self.data.samples.get(i).ok_or_else(|| VirsoError::new_err(format!("sample {i} out of range")))
    }
}

#[pyclass(name = "Model", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel(vm::VirsoModel);

fn variant(name: &str) -> PyResult<Variant> {
    match name {
        "full" => Ok(Variant::Full),
        "spectral_only" => Ok(Variant::SpectralOnly),
        "spatial_only" => Ok(Variant::SpatialOnly),
        other => Err(VirsoError::new_err(format!("unknown variant {other:?}"))),
    }
}

#[pymethods]
impl PyModel {
    /// Builds a model from a config dict (see `Model.toy(...).config`).
    #[new]
    #[pyo3(signature = (config, seed=0))]
    fn new(py: Python<'_>, config: &Bound<'_, PyAny>, seed: u64) -> PyResult<Self> {
        let cfg: VirsoConfig = from_py(py, config)?;
        vm::VirsoModel::new(cfg, seed).map(Self).map_err(err)
    }

    /// Desk-scale preset: four blocks, width 16, 16 modes.
    #[staticmethod]
    #[pyo3(signature = (input_width, output_channels, n, variant="full", seed=0))]
    fn toy(input_width: usize, output_channels: usize, n: usize, variant: &str, seed: u64) -> PyResult<Self> {
        let cfg = VirsoConfig { variant: self::variant(variant)?, ..VirsoConfig::toy(input_width, output_channels, n) };
        vm::VirsoModel::new(cfg, seed).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (blocks, seed=0))]
    fn heat_exchanger(blocks: usize, seed: u64) -> PyResult<Self> {
        vm::VirsoModel::new(VirsoConfig::heat_exchanger(blocks), seed).map(Self).map_err(err)
    }

    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.config)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.0.parameter_count()
    }

    /// n×C output for an (already normalized) input vector.
    fn forward(&self, py: Python<'_>, ctx: &PyGraphContext, u_q: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        py.detach(|| self.0.forward(&ctx.ctx, &u_q)).map(|t| rows(&t)).map_err(err)
    }

    /// Central-difference check; returns the largest relative error.
    #[pyo3(signature = (ctx, u_q, target, probes=30, step=1e-4, seed=0))]
    fn check_gradients(
        &self,
        ctx: &PyGraphContext,
        u_q: Vec<f64>,
        target: Vec<Vec<f64>>,
        probes: usize,
        step: f64,
        seed: u64,
    ) -> PyResult<f64> {
        let target = tensor(&target)?;
        self.0.check_gradients(&ctx.ctx, &u_q, &target, probes, step, seed).map(|r| r.max_rel_error).map_err(err)
    }

    /// Trains on `split` (train, val, test index lists). `schedule` is a dict
    /// of overrides on the default schedule. Returns `(checkpoint, report)`.
    #[pyo3(signature = (ctx, dataset, split, schedule=None))]
    fn train(
        &self,
        py: Python<'_>,
        ctx: &PyGraphContext,
        dataset: &PyDataset,
        split: (Vec<usize>, Vec<usize>, Vec<usize>),
        schedule: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<(PyCheckpoint, Py<PyAny>)> {
        let sched: Schedule = match schedule {
            Some(s) => from_py(py, s)?,
            None => Schedule::default(),
        };
        let split = tr::Split { train: split.0, val: split.1, test: split.2 };
        let model = self.0.clone();
        let out = py
            .detach(|| tr::train(model, &ctx.ctx, &dataset.data, &split, &sched, &ctx.graph_hash))
            .map_err(err)?;
        let report = to_py(py, &out.report)?;
        Ok((PyCheckpoint(out.checkpoint), report))
    }
}

#[pyclass(name = "Checkpoint", frozen)]
struct PyCheckpoint(vm::Checkpoint);

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        virso_core::io::read_checkpoint(&path).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        virso_core::io::write_checkpoint(&path, &self.0, serde_json::json!({ "tool": "virso-py" })).map_err(err)
    }

    #[getter]
    fn model(&self) -> PyModel {
        PyModel(self.0.model.clone())
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.0.epoch
    }

    #[getter]
    fn graph_hash(&self) -> String {
        self.0.graph_hash.clone()
    }

    /// Field reconstruction in physical units from a physical input vector.
    fn predict(&self, py: Python<'_>, ctx: &PyGraphContext, u_q: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.check_graph(ctx)?;
        py.detach(|| self.0.predict(&ctx.ctx, &u_q)).map(|p| rows(&p.s)).map_err(err)
    }

    /// Error summary over the given sample indices.
    fn evaluate(&self, py: Python<'_>, ctx: &PyGraphContext, dataset: &PyDataset, indices: Vec<usize>) -> PyResult<Py<PyAny>> {
        self.check_graph(ctx)?;
        let report = py.detach(|| tr::evaluate(&self.0, &ctx.ctx, &dataset.data, &indices, false)).map_err(err)?;
        to_py(py, &report)
    }
}

impl PyCheckpoint {
    fn check_graph(&self, ctx: &PyGraphContext) -> PyResult<()> {
        if self.0.graph_hash != ctx.graph_hash {
            return Err(VirsoError::new_err("checkpoint was trained on a different graph"));
        }
        Ok(())
    }
}

/// Per-channel relative L2 errors of an n×C prediction.
#[pyfunction]
fn relative_l2(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    tr::relative_l2(&tensor(&pred)?, &tensor(&truth)?).map(|e| e.per_channel).map_err(err)
}

/// Energy per iteration from `(t_s, power_w)` samples.
#[pyfunction]
#[pyo3(signature = (samples, iterations, interval_s=0.1))]
fn energy_per_iteration(samples: Vec<(f64, f64)>, iterations: usize, interval_s: f64) -> PyResult<f64> {
    let trace = TelemetryTrace::new(samples, interval_s, Scope::Device).map_err(err)?;
    bench::energy_per_iteration(&trace, iterations).map_err(err)
}

/// Energy-delay product in J·ms.
#[pyfunction]
fn edp(energy_j_per_it: f64, latency_ms: f64) -> PyResult<f64> {
    bench::edp(energy_j_per_it, latency_ms).map_err(err)
}

#[pyfunction]
fn power_normalized_accuracy(mean_err_percent: f64, power_w: f64) -> PyResult<f64> {
    bench::power_normalized_accuracy(mean_err_percent, power_w).map_err(err)
}

#[pyfunction]
fn reconstruction_ratio(n: usize, channels: usize, inputs: usize) -> PyResult<f64> {
    bench::reconstruction_ratio(n, channels, inputs).map_err(err)
}

#[pymodule]
fn virso(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VirsoError", m.py().get_type::<VirsoError>())?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyEigenBasis>()?;
    m.add_class::<PyAnchors>()?;
    m.add_class::<PyGraphContext>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_function(wrap_pyfunction!(relative_l2, m)?)?;
    m.add_function(wrap_pyfunction!(energy_per_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(edp, m)?)?;
    m.add_function(wrap_pyfunction!(power_normalized_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_ratio, m)?)?;
    Ok(())
}
