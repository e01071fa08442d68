//! Python bindings: synthetic data generation, matrix-profile discord
//! search, and the train/estimate pipeline.
//!
//! Build with `cargo build -p soh-python --release` and import the
//! resulting `libsoh_py.so` as `soh_py` (see python/smoke_test.py), or
//! build a wheel with maturin.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use soh_core::data::{self, DataError, SynthConfig};
use soh_core::gcn::TrainConfig;
use soh_core::pipeline::{self, ModelArtifact, PipelineError, RunConfig};
use soh_core::profile::{self, ProfileConfig};
use soh_core::series::{concat_cycles, FlatWindowPolicy};

fn pipeline_err(e: PipelineError) -> PyErr {
    match &e {
        PipelineError::Data(DataError::Io { .. }) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn data_err(e: DataError) -> PyErr {
    match &e {
        DataError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// One battery's discharge cycles and SOH labels.
#[pyclass]
struct Battery {
    inner: data::BatteryDataset,
}

#[pymethods]
impl Battery {
    #[getter]
    fn battery_id(&self) -> String {
        self.inner.battery_id.clone()
    }

    fn cycle_count(&self) -> usize {
        self.inner.cycles.len()
    }

    /// Voltage samples of a cycle (1-based index).
    fn samples(&self, cycle: usize) -> PyResult<Vec<f64>> {
        self.inner
            .cycle(cycle)
            .map(|c| c.samples.clone())
            .ok_or_else(|| PyValueError::new_err(format!("no cycle {cycle}")))
    }

    fn soh(&self, cycle: usize) -> PyResult<Option<f64>> {
        self.inner
            .cycle(cycle)
            .map(|c| c.soh)
            .ok_or_else(|| PyValueError::new_err(format!("no cycle {cycle}")))
    }

    fn eol_cycle(&self) -> Option<usize> {
        self.inner.eol_cycle()
    }

    /// Write the dataset as the documented CSV pair.
    fn save_csv(&self, cycles_path: PathBuf, labels_path: PathBuf) -> PyResult<()> {
        data::write_battery_csv(&self.inner, &cycles_path, &labels_path).map_err(data_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Battery(id={:?}, cycles={}, eol={:?})",
            self.inner.battery_id,
            self.inner.cycles.len(),
            self.inner.eol_cycle()
        )
    }
}

/// A trained estimation model together with its segment definition and
/// frozen base graph.
#[pyclass]
struct Model {
    inner: ModelArtifact,
}

#[pymethods]
impl Model {
    #[getter]
    fn v_ref(&self) -> f64 {
        self.inner.segment.v_ref
    }

    #[getter]
    fn segment_len(&self) -> usize {
        self.inner.segment.m
    }

    #[getter]
    fn final_loss(&self) -> f64 {
        self.inner.final_loss
    }

    fn reference(&self) -> String {
        self.inner.reference()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        pipeline::save_model(&self.inner, &path).map_err(pipeline_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(ref={}, v_ref={:.4}, m={})",
            self.inner.reference(),
            self.inner.segment.v_ref,
            self.inner.segment.m
        )
    }
}

/// Generate a synthetic degradation dataset with known ground truth. The
/// planted reference anomaly scales with the cycle length unless given
/// explicitly.
#[pyfunction]
#[pyo3(signature = (seed=42, total_cycles=600, noise_std=1e-3, base_duration=750.0, dt=2.0, knee_cycle=380, anomaly_position=None, anomaly_width=None))]
#[allow(clippy::too_many_arguments)]
fn synth(
    seed: u64,
    total_cycles: usize,
    noise_std: f64,
    base_duration: f64,
    dt: f64,
    knee_cycle: usize,
    anomaly_position: Option<usize>,
    anomaly_width: Option<usize>,
) -> PyResult<Battery> {
    let samples_per_cycle = base_duration / dt;
    let anomaly = soh_core::data::AnomalySpec {
        cycle: 2,
        position: anomaly_position.unwrap_or((0.35 * samples_per_cycle) as usize),
        amplitude: 0.006,
        width: anomaly_width.unwrap_or((0.27 * samples_per_cycle) as usize),
    };
    let cfg = SynthConfig {
        seed,
        total_cycles,
        noise_std,
        base_duration,
        dt,
        knee_cycle,
        anomaly: Some(anomaly),
        ..SynthConfig::default()
    };
    let inner = data::synth_battery(&cfg).map_err(data_err)?;
    Ok(Battery { inner })
}

/// Load a battery from the documented cycles/labels CSV pair.
#[pyfunction]
fn load_battery(cycles_path: PathBuf, labels_path: PathBuf) -> PyResult<Battery> {
    let inner = data::load_battery_csv(&cycles_path, &labels_path).map_err(data_err)?;
    Ok(Battery { inner })
}

/// Matrix profile of a raw series: per-position minimum z-normalized
/// distance to any window at least `exclusion` steps away (default m/2),
/// plus the best-match positions.
#[pyfunction]
#[pyo3(signature = (values, m, exclusion=None))]
fn matrix_profile(
    values: Vec<f64>,
    m: usize,
    exclusion: Option<usize>,
) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let series = soh_core::series::ConcatSeries {
        boundaries: vec![0],
        cycle_indices: vec![1],
        values,
    };
    let mut cfg = ProfileConfig::new(m);
    if let Some(excl) = exclusion {
        cfg = cfg.with_exclusion(excl);
    }
    let mp = profile::mp_fast_par(&series, &cfg)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((mp.distances, mp.indices))
}

/// Euclidean distance between z-normalized windows.
#[pyfunction]
fn znorm_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    soh_core::series::znorm_distance(&a, &b, FlatWindowPolicy::ZeroVector)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Pearson correlation coefficient.
#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    soh_core::graph::pearson(&x, &y).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn run_config(
    m: usize,
    k: usize,
    n: usize,
    d: usize,
    golden_cycle: usize,
    epochs: usize,
    hidden: usize,
    readout: usize,
    seed: u64,
) -> RunConfig {
    RunConfig {
        base: soh_core::graph::BaseGraphConfig { k, n, d },
        m,
        golden_cycle,
        train: TrainConfig {
            epochs,
            hidden,
            readout,
            seed,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    }
}

/// Locate the discord on the reference cycle of the early-life series.
/// Returns (v_ref, lambda, profile_peak).
#[pyfunction]
#[pyo3(signature = (battery, m=100, k=100, golden_cycle=2))]
fn discover_segment(
    battery: &Battery,
    m: usize,
    k: usize,
    golden_cycle: usize,
) -> PyResult<(f64, usize, f64)> {
    let cfg = run_config(m, k, 10.min(k), 1.max(k / 10), golden_cycle, 1, 8, 8, 0);
    let discovery = pipeline::discover_spec(&battery.inner, &cfg).map_err(pipeline_err)?;
    Ok((
        discovery.spec.v_ref,
        discovery.discord.lambda,
        discovery.discord.profile_peak,
    ))
}

/// Train the estimation model on the battery's offline split.
#[pyfunction]
#[pyo3(signature = (battery, m=100, k=100, n=10, d=10, golden_cycle=2, epochs=1000, hidden=128, readout=300, seed=42))]
#[allow(clippy::too_many_arguments)]
fn train(
    battery: &Battery,
    m: usize,
    k: usize,
    n: usize,
    d: usize,
    golden_cycle: usize,
    epochs: usize,
    hidden: usize,
    readout: usize,
    seed: u64,
) -> PyResult<Model> {
    let cfg = run_config(m, k, n, d, golden_cycle, epochs, hidden, readout, seed);
    let (artifact, _report) = pipeline::run_offline(&battery.inner, &cfg).map_err(pipeline_err)?;
    Ok(Model { inner: artifact })
}

/// Estimate the online split with a trained model. Returns a dict with
/// per-cycle rows and the aggregate metrics.
#[pyfunction]
fn estimate<'py>(py: Python<'py>, model: &Model, battery: &Battery) -> PyResult<Bound<'py, PyDict>> {
    let report = pipeline::run_online(&model.inner, &battery.inner, &model.inner.config)
        .map_err(pipeline_err)?;
    let dict = PyDict::new(py);
    dict.set_item("battery_id", &report.battery_id)?;
    dict.set_item("model_ref", &report.model_ref)?;
    dict.set_item("k_tr", report.k_tr)?;
    dict.set_item("eol", report.eol)?;
    dict.set_item("mae", report.mae)?;
    dict.set_item("rmse", report.rmse)?;
    dict.set_item("evaluated", report.evaluated)?;
    let rows: Vec<(usize, f64, f64, bool)> = report
        .rows
        .iter()
        .map(|r| (r.cycle, r.measured, r.estimated, r.padded))
        .collect();
    dict.set_item("rows", rows)?;
    Ok(dict)
}

/// Load a model artifact saved by `Model.save` or the CLI.
#[pyfunction]
fn load_model(path: PathBuf) -> PyResult<Model> {
    let inner = pipeline::load_model(&path).map_err(pipeline_err)?;
    Ok(Model { inner })
}

#[pymodule]
fn soh_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Battery>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(load_battery, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_profile, m)?)?;
    m.add_function(wrap_pyfunction!(znorm_distance, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(discover_segment, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(load_model, m)?)?;
    Ok(())
}
