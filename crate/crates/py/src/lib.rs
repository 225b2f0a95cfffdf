//! Python bindings for `trinity_core`.
//!
//! Sizes follow the core conventions: model capacities in GB, cache and
//! simulator capacities in bytes. Core errors surface as `TrinityError`
//! (a `ValueError`) whose message starts with the error kind; I/O failures
//! raise `OSError`.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use trinity_core as core;
use trinity_core::{
    CacheConfig, CacheCostParams, DeficitParams, Embedding, FitFamily, Lookup, PerResolution,
    Resolution, ReuseDepthPolicy, SimConfig,
};

create_exception!(trinity, TrinityError, PyValueError);

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => TrinityError::new_err(format!("{}: {other}", other.kind())),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// Converts any serializable value into plain Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn resolution(name: &str) -> PyResult<Resolution> {
    name.parse().py_err()
}

fn embedding(values: Vec<f64>) -> PyResult<Embedding> {
    Embedding::normalized(values).py_err()
}

/// Memory that does not fit on the devices, in GB.
#[pyfunction]
fn memory_deficit(total: f64, devices: u32, per_device: f64) -> PyResult<f64> {
    let p = DeficitParams::deficit_only(total, devices, per_device, 0.0);
    p.validate().py_err()?;
    Ok(core::memory_deficit(&p))
}

/// Per-iteration communication volume including deficit traffic.
#[pyfunction]
#[pyo3(signature = (total, devices, per_device, k, allreduce=0.0, state=0.0))]
fn comm_cost(total: f64, devices: u32, per_device: f64, k: f64, allreduce: f64, state: f64) -> PyResult<f64> {
    let p = DeficitParams {
        total_memory: total,
        device_count: devices,
        device_memory: per_device,
        allreduce_factor: allreduce,
        state_volume: state,
        deficit_bandwidth_factor: k,
    };
    p.validate().py_err()?;
    Ok(core::comm_cost(&p))
}

/// Minimum bandwidth over `(bandwidth, compute, quality)` samples.
/// Returns `(bandwidth, sample_index)`.
#[pyfunction]
fn frontier(samples: Vec<(f64, f64, f64)>, quality: f64, budget: f64) -> PyResult<(f64, usize)> {
    let samples: Vec<_> = samples
        .into_iter()
        .map(|(b, c, q)| core::RateComputeSample::new(b, c, q))
        .collect();
    let p = core::frontier_min_bandwidth(&samples, quality, budget).py_err()?;
    Ok((p.bandwidth, p.sample_index))
}

/// Hit probability as a function of capacity in GB. Calling the model
/// evaluates it.
#[pyclass(name = "HitRateModel", module = "trinity", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHitRateModel {
    inner: core::HitRateModel,
}

#[pymethods]
impl PyHitRateModel {
    #[staticmethod]
    fn exponential(beta: f64, entry_size: f64) -> PyResult<Self> {
        Ok(PyHitRateModel { inner: core::HitRateModel::exponential(beta, entry_size).py_err()? })
    }

    #[staticmethod]
    fn power_law(kappa: f64, gamma: f64) -> PyResult<Self> {
        Ok(PyHitRateModel { inner: core::HitRateModel::power_law(kappa, gamma).py_err()? })
    }

    #[staticmethod]
    fn empirical(points: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(PyHitRateModel { inner: core::HitRateModel::empirical(points).py_err()? })
    }

    #[staticmethod]
    fn constant(hit_rate: f64) -> PyResult<Self> {
        Ok(PyHitRateModel { inner: core::HitRateModel::constant(hit_rate).py_err()? })
    }

    fn __call__(&self, capacity: f64) -> PyResult<f64> {
        core::hit_rate(&self.inner, capacity).py_err()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("HitRateModel({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

fn cost_params(reuse_depth: u32, total_steps: u32, step_cost: f64, entry_size: f64) -> CacheCostParams {
    CacheCostParams { total_steps, step_cost, reuse_depth, entry_size }
}

#[pyfunction]
fn hit_rate(model: &PyHitRateModel, capacity: f64) -> PyResult<f64> {
    core::hit_rate(&model.inner, capacity).py_err()
}

/// Expected per-request compute at `capacity` GB, as a dict.
#[pyfunction]
#[pyo3(signature = (model, capacity, reuse_depth, total_steps=50, step_cost=1e9, entry_size=2.0))]
fn expected_compute<'py>(
    py: Python<'py>,
    model: &PyHitRateModel,
    capacity: f64,
    reuse_depth: u32,
    total_steps: u32,
    step_cost: f64,
    entry_size: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cost = cost_params(reuse_depth, total_steps, step_cost, entry_size);
    to_py(py, &core::expected_compute(&cost, &model.inner, capacity).py_err()?)
}

/// FLOPs saved per additional GB at `capacity`.
#[pyfunction]
#[pyo3(signature = (model, capacity, reuse_depth, total_steps=50, step_cost=1e9, entry_size=2.0))]
fn marginal_benefit(
    model: &PyHitRateModel,
    capacity: f64,
    reuse_depth: u32,
    total_steps: u32,
    step_cost: f64,
    entry_size: f64,
) -> PyResult<f64> {
    let cost = cost_params(reuse_depth, total_steps, step_cost, entry_size);
    core::marginal_benefit(&cost, &model.inner, capacity).py_err()
}

/// Fits `"exp"` or `"power"` to `(GB, hit rate)` points. Returns `(model, rms_residual)`.
#[pyfunction]
#[pyo3(signature = (points, family, entry_size=0.08))]
fn fit_hit_rate(points: Vec<(f64, f64)>, family: &str, entry_size: f64) -> PyResult<(PyHitRateModel, f64)> {
    let family: FitFamily = family.parse().py_err()?;
    let fit = core::fit_hit_rate(&points, family, entry_size).py_err()?;
    Ok((PyHitRateModel { inner: fit.model }, fit.residual))
}

/// Reuse depth for a similarity under the default policy.
#[pyfunction]
fn reuse_depth(similarity: f64) -> u32 {
    core::cache::reuse_depth(similarity, &ReuseDepthPolicy::default())
}

/// Approximate latent cache with LRU eviction and the default reuse policy.
#[pyclass(name = "ApproxCache", module = "trinity")]
struct PyApproxCache {
    state: core::CacheState,
    policy: ReuseDepthPolicy,
}

#[pymethods]
impl PyApproxCache {
    #[new]
    #[pyo3(signature = (capacity_bytes, dimension=768))]
    fn new(capacity_bytes: u64, dimension: usize) -> Self {
        let config = CacheConfig { dimension, ..CacheConfig::new(capacity_bytes) };
        PyApproxCache { state: core::CacheState::new(config), policy: ReuseDepthPolicy::default() }
    }

    /// `(entry_id, similarity, depth)` on a hit, `None` on a miss.
    #[pyo3(signature = (embedding, resolution=None))]
    fn lookup(&mut self, embedding: Vec<f64>, resolution: Option<&str>) -> PyResult<Option<(u64, f64, u32)>> {
        let query = self::embedding(embedding)?;
        let res = resolution.map(self::resolution).transpose()?;
        Ok(match self.state.lookup(&query, &self.policy, res).py_err()? {
            Lookup::Hit { entry_id, similarity, depth } => Some((entry_id, similarity, depth)),
            Lookup::Miss => None,
        })
    }

    /// Most similar resident entry as `(entry_id, similarity)`, without touching recency.
    #[pyo3(signature = (embedding, resolution=None))]
    fn nearest(&self, embedding: Vec<f64>, resolution: Option<&str>) -> PyResult<Option<(u64, f64)>> {
        let query = self::embedding(embedding)?;
        let res = resolution.map(self::resolution).transpose()?;
        self.state.nearest(&query, res).py_err()
    }

    /// Returns `(entry_id, evicted_ids)`.
    #[pyo3(signature = (embedding, resolution="720p"))]
    fn insert(&mut self, embedding: Vec<f64>, resolution: &str) -> PyResult<(u64, Vec<u64>)> {
        let e = self::embedding(embedding)?;
        let ins = self.state.insert(e, self::resolution(resolution)?).py_err()?;
        Ok((ins.entry_id, ins.evicted))
    }

    #[getter]
    fn capacity(&self) -> u64 {
        self.state.capacity()
    }

    #[getter]
    fn occupied(&self) -> u64 {
        self.state.occupied()
    }

    fn __len__(&self) -> usize {
        self.state.len()
    }

    fn __contains__(&self, entry_id: u64) -> bool {
        self.state.get(entry_id).is_some()
    }
}

/// A replayable request trace.
#[pyclass(name = "Trace", module = "trinity", frozen)]
struct PyTrace {
    inner: core::Trace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension
    }

    fn request_ids(&self) -> Vec<String> {
        self.inner.requests.iter().map(|r| r.request_id.clone()).collect()
    }

    fn resolutions(&self) -> Vec<&'static str> {
        self.inner.requests.iter().map(|r| r.resolution.as_str()).collect()
    }

    fn embedding(&self, index: usize) -> PyResult<Vec<f64>> {
        self.inner
            .requests
            .get(index)
            .map(|r| r.embedding.as_slice().to_vec())
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(index))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        core::write_trace(&self.inner, BufWriter::new(file)).py_err()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Clustered synthetic trace. `mix` maps resolution names to weights.
#[pyfunction]
#[pyo3(signature = (requests, clusters, zipf=1.1, sigma=0.05, dim=768, seed=0, mix=None))]
fn generate_trace(
    requests: usize,
    clusters: usize,
    zipf: f64,
    sigma: f64,
    dim: usize,
    seed: u64,
    mix: Option<Vec<(String, f64)>>,
) -> PyResult<PyTrace> {
    let mut weights = PerResolution::uniform(0.0);
    match mix {
        Some(pairs) => {
            for (name, w) in pairs {
                weights.set(resolution(&name)?, w);
            }
        }
        None => weights.set(Resolution::P720, 1.0),
    }
    let config = core::GeneratorConfig {
        num_requests: requests,
        num_clusters: clusters,
        zipf_exponent: zipf,
        noise_sigma: sigma,
        dimension: dim,
        resolution_mix: weights,
        seed,
    };
    Ok(PyTrace { inner: core::generate_trace(&config).py_err()? })
}

#[pyfunction]
#[pyo3(signature = (path, dim=None))]
fn load_trace(path: &str, dim: Option<usize>) -> PyResult<PyTrace> {
    let file = File::open(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
    Ok(PyTrace { inner: core::load_trace(BufReader::new(file), dim).py_err()? })
}

fn sim_config(capacity: u64, insert_on_hit: bool, cross_resolution: bool) -> SimConfig {
    SimConfig { insert_on_hit, cross_resolution_match: cross_resolution, ..SimConfig::new(capacity) }
}

/// Replays a trace and returns the summary dict.
#[pyfunction]
#[pyo3(signature = (trace, capacity_bytes, insert_on_hit=false, cross_resolution=false))]
fn replay<'py>(
    py: Python<'py>,
    trace: &PyTrace,
    capacity_bytes: u64,
    insert_on_hit: bool,
    cross_resolution: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = sim_config(capacity_bytes, insert_on_hit, cross_resolution);
    let summary = core::sim::replay_summary(&trace.inner, &cfg).py_err()?;
    to_py(py, &summary)
}

/// Hit-rate curve over byte capacities, as a list of dicts sorted by capacity.
#[pyfunction]
#[pyo3(signature = (trace, capacities, jobs=None, insert_on_hit=false, cross_resolution=false))]
fn sweep<'py>(
    py: Python<'py>,
    trace: &PyTrace,
    capacities: Vec<u64>,
    jobs: Option<usize>,
    insert_on_hit: bool,
    cross_resolution: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = sim_config(0, insert_on_hit, cross_resolution);
    let rows = core::sweep(&trace.inner, &cfg, &capacities, jobs).py_err()?;
    to_py(py, &rows)
}

#[pymodule]
fn trinity(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TrinityError", m.py().get_type::<TrinityError>())?;
    m.add_class::<PyHitRateModel>()?;
    m.add_class::<PyApproxCache>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(memory_deficit, m)?)?;
    m.add_function(wrap_pyfunction!(comm_cost, m)?)?;
    m.add_function(wrap_pyfunction!(frontier, m)?)?;
    m.add_function(wrap_pyfunction!(hit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(expected_compute, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_benefit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_hit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(reuse_depth, m)?)?;
    m.add_function(wrap_pyfunction!(generate_trace, m)?)?;
    m.add_function(wrap_pyfunction!(load_trace, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
