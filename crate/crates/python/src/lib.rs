//! Python bindings for `timerng`.
//!
//! Structured results (stats, reports, oracle values) cross the boundary as
//! JSON and come back as plain dicts.

#![allow(clippy::useless_conversion)]

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

use timerng::analysis::{self, laws};
use timerng::event_source::{self, io, EventStream, SourceConfig};
use timerng::experiments::{self, Budget, PipelineConfig};
use timerng::extractor::{self, BitBuffer, BitFileMeta, ClockConfig, ClockMode, ExtractionStats, Method};
use timerng::Error;

fn py_err(e: Error) -> PyErr {
    match e.root() {
        Error::Config(_)
        | Error::Domain(_)
        | Error::Unsupported(_)
        | Error::Parse { .. }
        | Error::NonMonotone { .. }
        | Error::Empty => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let json = py.import_bound("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

fn format_of(format: Option<&str>, path: &std::path::Path) -> PyResult<io::TimestampFormat> {
    match format {
        Some(f) => f.parse().map_err(py_err),
        None => Ok(io::TimestampFormat::from_path(path)),
    }
}

fn clock_mode(mode: &str) -> PyResult<ClockMode> {
    match mode {
        "restartable" | "restart" => Ok(ClockMode::Restartable),
        "continuous" => Ok(ClockMode::Continuous),
        other => Err(PyValueError::new_err(format!(
            "mode must be 'restartable' or 'continuous', got '{other}'"
        ))),
    }
}

/// Strictly increasing event times in seconds.
#[pyclass(name = "EventStream", module = "timerng_py")]
#[derive(Clone)]
pub struct PyEventStream {
    inner: EventStream,
}

#[pymethods]
impl PyEventStream {
    #[new]
    fn new(timestamps: Vec<f64>) -> PyResult<Self> {
        EventStream::from_times(&timestamps)
            .map(|inner| PyEventStream { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, format=None))]
    fn read(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let f = format_of(format, &path)?;
        io::ingest_timestamps(&path, f)
            .map(|inner| PyEventStream { inner })
            .map_err(py_err)
    }

    #[pyo3(signature = (path, format=None))]
    fn write(&self, path: PathBuf, format: Option<&str>) -> PyResult<()> {
        let f = format_of(format, &path)?;
        io::write_timestamps(&self.inner, &path, f).map_err(py_err)
    }

    fn timestamps(&self) -> Vec<f64> {
        self.inner.timestamps().to_vec()
    }

    fn intervals(&self) -> Vec<f64> {
        self.inner.intervals().collect()
    }

    fn dead_time(&self, d: f64) -> PyResult<Self> {
        event_source::apply_dead_time(&self.inner, d)
            .map(|inner| PyEventStream { inner })
            .map_err(py_err)
    }

    fn afterpulse(&self, prob: f64, tau: f64, seed: u64) -> PyResult<Self> {
        event_source::apply_afterpulsing(&self.inner, prob, tau, seed)
            .map(|inner| PyEventStream { inner })
            .map_err(py_err)
    }

    fn meta(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, self.inner.meta())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("EventStream(len={})", self.inner.len())
    }
}

/// Packed bit sequence.
#[pyclass(name = "Bits", module = "timerng_py")]
#[derive(Clone)]
pub struct PyBits {
    inner: BitBuffer,
    method: String,
    stats: ExtractionStats,
}

impl PyBits {
    fn plain(inner: BitBuffer) -> Self {
        PyBits {
            inner,
            method: "unknown".into(),
            stats: ExtractionStats::default(),
        }
    }
}

#[pymethods]
impl PyBits {
    #[new]
    fn new(bits: &str) -> Self {
        PyBits::plain(BitBuffer::from_str_bits(bits))
    }

    #[staticmethod]
    #[pyo3(signature = (path, n_bits=None))]
    fn read(path: PathBuf, n_bits: Option<usize>) -> PyResult<Self> {
        extractor::read_bit_file(&path, n_bits)
            .map(PyBits::plain)
            .map_err(py_err)
    }

    /// Raw packed bytes plus the `<path>.json` sidecar recording the length.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        extractor::write_bit_file(&path, &self.inner).map_err(py_err)?;
        let meta = BitFileMeta {
            schema_version: timerng::SCHEMA_VERSION,
            n_bits: self.inner.len() as u64,
            method: self.method.clone(),
            clock: None,
            source: None,
            stats: self.stats,
            efficiency: self.stats.efficiency(),
            bits_per_pair: self.stats.bits_per_pair(),
        };
        extractor::write_sidecar(&path, &meta).map_err(py_err)
    }

    fn to_list(&self) -> Vec<bool> {
        self.inner.iter().collect()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new_bound(py, self.inner.as_bytes())
    }

    fn count_ones(&self) -> u64 {
        self.inner.count_ones()
    }

    /// ENT-style report as a dict.
    fn analyze(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &analysis::ent_battery(&self.inner).map_err(py_err)?)
    }

    /// The report rendered as text.
    fn report(&self) -> PyResult<String> {
        Ok(analysis::ent_battery(&self.inner).map_err(py_err)?.to_string())
    }

    fn bias(&self) -> PyResult<(f64, f64)> {
        analysis::bias(&self.inner).map_err(py_err)
    }

    fn autocorr(&self, k_max: usize) -> PyResult<Vec<(f64, f64)>> {
        analysis::autocorr(&self.inner, k_max).map_err(py_err)
    }

    fn pair_probs(&self) -> PyResult<(f64, f64, f64, f64)> {
        let p = analysis::pair_probs(&self.inner).map_err(py_err)?;
        Ok((p.p00, p.p01, p.p10, p.p11))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Bits(len={})", self.inner.len())
    }
}

/// Poisson source with optional dead time and afterpulsing.
#[pyfunction]
#[pyo3(signature = (tau, n_events, seed, dead_time=0.0, afterpulse_prob=0.0, afterpulse_tau=1e-6))]
fn simulate(
    tau: f64,
    n_events: u64,
    seed: u64,
    dead_time: f64,
    afterpulse_prob: f64,
    afterpulse_tau: f64,
) -> PyResult<PyEventStream> {
    let cfg = SourceConfig::new(tau, n_events, seed)
        .with_dead_time(dead_time)
        .with_afterpulsing(afterpulse_prob, afterpulse_tau);
    event_source::simulate(&cfg)
        .map(|inner| PyEventStream { inner })
        .map_err(py_err)
}

fn method_of(method: &str, period: Option<f64>, phase: f64, skew: f64) -> PyResult<Method> {
    let clock = |mode: ClockMode| -> PyResult<ClockConfig> {
        let t = period.ok_or_else(|| PyValueError::new_err("period is required for clocked methods"))?;
        Ok(ClockConfig::new(t, mode).with_phase(phase).with_skew(skew))
    };
    Ok(match method {
        "exact" | "basic" => Method::Basic,
        "restart" | "restartable" => Method::Clocked(clock(ClockMode::Restartable)?),
        "continuous" => Method::Clocked(clock(ClockMode::Continuous)?),
        "updown" => Method::UpDown(clock(ClockMode::Restartable)?),
        other => {
            return Err(PyValueError::new_err(format!(
                "method must be exact, restart, continuous or updown, got '{other}'"
            )))
        }
    })
}

/// Extract bits; returns `(bits, stats)`. `phase` and `skew` are seconds.
#[pyfunction]
#[pyo3(signature = (stream, method="restart", period=None, phase=0.0, skew=0.0))]
fn extract(
    py: Python<'_>,
    stream: &PyEventStream,
    method: &str,
    period: Option<f64>,
    phase: f64,
    skew: f64,
) -> PyResult<(PyBits, PyObject)> {
    let m = method_of(method, period, phase, skew)?;
    let (bits, stats) = extractor::extract(&stream.inner, &m).map_err(py_err)?;
    let out = PyBits {
        inner: bits,
        method: m.name().to_string(),
        stats,
    };
    Ok((out, to_py(py, &stats)?))
}

#[pyfunction]
fn oracle_restartable(py: Python<'_>, x: f64) -> PyResult<PyObject> {
    to_py(py, &laws::oracle_restartable(x).map_err(py_err)?)
}

#[pyfunction]
fn a_asymptotic(x: f64) -> f64 {
    laws::a_asymptotic(x)
}

#[pyfunction]
fn eta_asymptotic(x: f64) -> f64 {
    laws::eta_asymptotic(x)
}

#[pyfunction]
fn bias_model(x: f64, dt_over_tau: f64) -> f64 {
    laws::bias_model(x, dt_over_tau)
}

#[pyfunction]
fn coherence_time(py: Python<'_>, wavelength: f64, width: f64) -> PyResult<PyObject> {
    to_py(py, &event_source::coherence_time(wavelength, width).map_err(py_err)?)
}

/// Streaming run in units of τ; returns the measurement dict.
#[pyfunction]
#[pyo3(signature = (x, mode, n_bits, seed, dead_time=0.0, skew=0.0))]
fn measure(
    py: Python<'_>,
    x: f64,
    mode: &str,
    n_bits: u64,
    seed: u64,
    dead_time: f64,
    skew: f64,
) -> PyResult<PyObject> {
    let cfg = PipelineConfig::dimensionless(x, clock_mode(mode)?, seed, Budget::Bits(n_bits))
        .with_dead_time(dead_time)
        .with_skew(skew);
    let m = py.allow_threads(|| experiments::measure(&cfg)).map_err(py_err)?;
    to_py(py, &m)
}

/// Named validation (see `timerng validate`); returns the report dict.
#[pyfunction]
#[pyo3(signature = (name, seed=1))]
fn validate(py: Python<'_>, name: &str, seed: u64) -> PyResult<PyObject> {
    let r = py.allow_threads(|| experiments::run_check(name, seed)).map_err(py_err)?;
    to_py(py, &r)
}

#[pymodule]
pub fn timerng_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", timerng::VERSION)?;
    m.add_class::<PyEventStream>()?;
    m.add_class::<PyBits>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_restartable, m)?)?;
    m.add_function(wrap_pyfunction!(a_asymptotic, m)?)?;
    m.add_function(wrap_pyfunction!(eta_asymptotic, m)?)?;
    m.add_function(wrap_pyfunction!(bias_model, m)?)?;
    m.add_function(wrap_pyfunction!(coherence_time, m)?)?;
    m.add_function(wrap_pyfunction!(measure, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
