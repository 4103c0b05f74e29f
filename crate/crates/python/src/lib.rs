//! Python bindings. The extension is importable as `mimo_placement`.

use std::path::PathBuf;

use mimo_placement::{
    oracle, scenarios, Budgets, Criterion, DeltaGrid, FimCache, RadarConfig, Selection as CoreSelection,
};
use mimo_placement_cli::{JobConfig, Prepared};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Radar configuration. Build one from a scenario name or from JSON.
#[pyclass(name = "Radar", module = "mimo_placement", from_py_object)]
#[derive(Clone)]
pub struct PyRadar {
    inner: RadarConfig,
}

#[pymethods]
impl PyRadar {
    #[staticmethod]
    fn scenario(name: &str) -> PyResult<Self> {
        let s = scenarios::by_name(name)
            .ok_or_else(|| value_err(format!("unknown scenario {name:?}")))?
            .map_err(value_err)?;
        Ok(Self { inner: s.config })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: RadarConfig = serde_json::from_str(text).map_err(value_err)?;
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    #[getter]
    fn transmitters(&self) -> usize {
        self.inner.transmitters
    }

    #[getter]
    fn pulses(&self) -> usize {
        self.inner.pulses
    }

    #[getter]
    fn receivers(&self) -> usize {
        self.inner.receivers
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.wavelength()
    }

    #[getter]
    fn angle_resolution(&self) -> f64 {
        self.inner.angle_resolution()
    }

    #[getter]
    fn velocity_resolution(&self) -> f64 {
        self.inner.velocity_resolution()
    }

    fn __repr__(&self) -> String {
        format!(
            "Radar(transmitters={}, pulses={}, receivers={})",
            self.inner.transmitters, self.inner.pulses, self.inner.receivers
        )
    }
}

/// Grid of two-target parameter differences `(du, dv)`.
#[pyclass(name = "Grid", module = "mimo_placement", from_py_object)]
#[derive(Clone)]
pub struct PyGrid {
    inner: DeltaGrid,
}

#[pymethods]
impl PyGrid {
    #[staticmethod]
    fn scenario(name: &str) -> PyResult<Self> {
        let s = scenarios::by_name(name)
            .ok_or_else(|| value_err(format!("unknown scenario {name:?}")))?
            .map_err(value_err)?;
        Ok(Self { inner: s.grid })
    }

    #[staticmethod]
    #[pyo3(signature = (du, dv, nu, nv, exclusion = 0.0))]
    fn lattice(du: (f64, f64), dv: (f64, f64), nu: usize, nv: usize, exclusion: f64) -> PyResult<Self> {
        let inner = mimo_placement::fim::build_grid(du, dv, nu, nv, exclusion).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn points(points: Vec<(f64, f64)>) -> PyResult<Self> {
        let pts = points
            .into_iter()
            .map(|(du, dv)| mimo_placement::DeltaTheta::new(du, dv))
            .collect();
        Ok(Self {
            inner: DeltaGrid::from_points(pts).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_list(&self) -> Vec<(f64, f64)> {
        self.inner.points.iter().map(|p| (p.du, p.dv)).collect()
    }
}

/// Boolean design: `A[i][p]` selects pulse `p` of transmitter `i`, `b[r]`
/// selects receiver `r`.
#[pyclass(name = "Selection", module = "mimo_placement", from_py_object)]
#[derive(Clone)]
pub struct PySelection {
    inner: CoreSelection,
}

#[pymethods]
impl PySelection {
    #[new]
    fn new(a: Vec<Vec<u8>>, b: Vec<u8>) -> PyResult<Self> {
        Ok(Self {
            inner: CoreSelection::from_matrix(&a, &b).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn full(radar: &PyRadar) -> Self {
        Self {
            inner: CoreSelection::full(&radar.inner),
        }
    }

    #[getter(A)]
    fn a(&self) -> Vec<Vec<u8>> {
        self.inner.pulse_matrix()
    }

    #[getter]
    fn b(&self) -> Vec<u8> {
        self.inner.receiver_vector()
    }

    #[getter]
    fn num_pulses(&self) -> usize {
        self.inner.count_pulses()
    }

    #[getter]
    fn num_receivers(&self) -> usize {
        self.inner.count_receivers()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Selection(pulses={}, receivers={})",
            self.inner.count_pulses(),
            self.inner.count_receivers()
        )
    }
}

fn criterion(json: &str) -> PyResult<Criterion> {
    serde_json::from_str(json).map_err(value_err)
}

/// Criterion value of `selection`. `criterion` is the JSON criterion object,
/// e.g. `{"kind": "A_OPT"}`.
#[pyfunction]
fn evaluate(radar: &PyRadar, grid: &PyGrid, criterion_json: &str, selection: &PySelection) -> PyResult<f64> {
    let crit = criterion(criterion_json)?;
    let cache = FimCache::build(&radar.inner, &grid.inner, true).map_err(value_err)?;
    crit.evaluate(&cache, &selection.inner).map_err(value_err)
}

/// Weighted CRLB trace at every grid point.
#[pyfunction]
fn crlb_traces(radar: &PyRadar, grid: &PyGrid, selection: &PySelection) -> PyResult<Vec<f64>> {
    let cache = FimCache::build(&radar.inner, &grid.inner, true).map_err(value_err)?;
    Ok(cache
        .assemble(&selection.inner)
        .map_err(value_err)?
        .iter()
        .map(oracle::crlb_trace_of)
        .collect())
}

/// Runs a job document (same schema as the command-line tool) at the given
/// budgets and returns `(selection, objective)`.
#[pyfunction]
#[pyo3(signature = (job_json, k_p = None, k_r = None))]
fn design(job_json: &str, k_p: Option<usize>, k_r: Option<usize>) -> PyResult<(PySelection, f64)> {
    let mut job = JobConfig::from_json(job_json)
        .and_then(JobConfig::resolve)
        .map_err(value_err)?;
    if k_p.is_some() || k_r.is_some() {
        let b = job.budgets();
        job = job
            .with_budgets(Budgets::new(k_p.unwrap_or(b.pulses), k_r.unwrap_or(b.receivers)))
            .map_err(value_err)?;
    }
    let prep = Prepared::new(&job).map_err(value_err)?;
    let solved = mimo_placement_cli::solve(&job, &prep).map_err(value_err)?;
    Ok((PySelection { inner: solved.selection }, solved.objective))
}

/// Runs a job document and writes `selection.json` and `crlb.csv` to `out`.
#[pyfunction]
fn design_to_dir(job_json: &str, out: PathBuf) -> PyResult<String> {
    let job = JobConfig::from_json(job_json)
        .and_then(JobConfig::resolve)
        .map_err(value_err)?;
    let file = mimo_placement_cli::design(&job, &out).map_err(value_err)?;
    Ok(serde_json::to_string(&file).expect("selection serializes"))
}

/// Normalized beampattern in dB at each direction-cosine offset.
#[pyfunction]
fn beampattern(radar: &PyRadar, selection: &PySelection, du: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(oracle::beampattern(&radar.inner, &selection.inner, &du)
        .map_err(value_err)?
        .db)
}

/// Normalized velocity ambiguity in dB at each velocity offset (m/s).
#[pyfunction]
fn ambiguity_velocity(radar: &PyRadar, selection: &PySelection, dv: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(oracle::ambiguity_velocity(&radar.inner, &selection.inner, &dv)
        .map_err(value_err)?
        .db)
}

#[pymodule]
#[pyo3(name = "mimo_placement")]
fn mimo_placement_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRadar>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PySelection>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(crlb_traces, m)?)?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(design_to_dir, m)?)?;
    m.add_function(wrap_pyfunction!(beampattern, m)?)?;
    m.add_function(wrap_pyfunction!(ambiguity_velocity, m)?)?;
    m.add("SCENARIOS", scenarios::NAMES.to_vec())?;
    Ok(())
}
