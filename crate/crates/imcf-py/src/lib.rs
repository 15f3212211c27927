//! Python bindings: grids, graph states, the integrator, certificate
//! checks, and decay-rate fits. Errors surface as ValueError (IOError for
//! file problems); all wrapped operations return new objects.

use std::cell::RefCell;
use std::path::PathBuf;
use std::str::FromStr;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use imcf_core::certificates as cert;
use imcf_core::decay;
use imcf_core::error::Error;
use imcf_core::flow;
use imcf_core::geometry;
use imcf_core::grid;
use imcf_core::initial;
use imcf_core::io;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(from_py_object)]
#[derive(Clone)]
struct Grid {
    inner: grid::Grid,
}

#[pymethods]
impl Grid {
    #[new]
    fn new(dimension: usize, points_per_axis: usize, length: f64) -> PyResult<Self> {
        Ok(Self {
            inner: grid::Grid::new(dimension, points_per_axis, length).map_err(to_py)?,
        })
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn points_per_axis(&self) -> usize {
        self.inner.points_per_axis()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    #[getter]
    fn num_points(&self) -> usize {
        self.inner.num_points()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(dimension={}, points_per_axis={}, length={})",
            self.inner.dim(), self.inner.points_per_axis(), self.inner.length()
        )
    }
}

#[pyclass(from_py_object)]
#[derive(Clone)]
struct GraphState {
    inner: grid::GraphState,
}

#[pymethods]
impl GraphState {
    #[new]
    fn new(grid: Grid, t: f64, y: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: grid::GraphState::new(grid.inner, t, y).map_err(to_py)?,
        })
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid {
            inner: self.inner.grid,
        }
    }

    /// Heights in row-major order.
    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().to_vec()
    }

    fn y_inf(&self) -> f64 {
        self.inner.y_inf()
    }

    fn y_sup(&self) -> f64 {
        self.inner.y_sup()
    }

    /// Ambient scaling (x, y) -> (lambda x, lambda y); curvatures unchanged.
    fn scaled(&self, lambda: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.scaled(lambda).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "GraphState(t={}, n={}, points_per_axis={})",
            self.inner.t, self.inner.grid.dim(), self.inner.grid.points_per_axis()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (grid, family, *, height, amplitude = 0.0, wave = None, width = None, seed = 0))]
fn initial_state(
    grid: Grid,
    family: &str,
    height: f64,
    amplitude: f64,
    wave: Option<Vec<i64>>,
    width: Option<f64>,
    seed: u64,
) -> PyResult<GraphState> {
    let fam = match family {
        "constant" => initial::InitialFamily::Constant { height },
        "sine" => initial::InitialFamily::Sine {
            height,
            amplitude,
            wave: wave.ok_or_else(|| PyValueError::new_err("sine requires wave"))?,
        },
        "gaussian_bump" => initial::InitialFamily::GaussianBump {
            height,
            amplitude,
            width: width.ok_or_else(|| PyValueError::new_err("gaussian_bump requires width"))?,
        },
        "band_limited_random" => initial::InitialFamily::BandLimitedRandom {
            height,
            amplitude,
            seed,
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown family {other:?}; expected constant, sine, gaussian_bump, or band_limited_random"
            )))
        }
    };
    Ok(GraphState {
        inner: initial::make_initial(&fam, grid.inner).map_err(to_py)?,
    })
}

/// Pointwise mean curvature in row-major order.
#[pyfunction]
fn mean_curvature(state: &GraphState) -> PyResult<Vec<f64>> {
    Ok(geometry::geometry(&state.inner).map_err(to_py)?.mean_curv)
}

fn sample_dict<'py>(py: Python<'py>, s: &flow::Sample) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", s.t)?;
    d.set_item("y_inf", s.y_inf)?;
    d.set_item("y_sup", s.y_sup)?;
    d.set_item("v_sup", s.v_sup)?;
    d.set_item("w_inf", s.w_inf)?;
    d.set_item("H_inf", s.h_inf)?;
    d.set_item("H_sup", s.h_sup)?;
    d.set_item("grad_sup2", s.grad_sup2)?;
    d.set_item("hess_sup", s.hess_sup)?;
    d.set_item("G_sup", s.g_sup)?;
    d.set_item("P_max_sup", s.p_max_sup)?;
    d.set_item("H_at_grad_argmax", s.h_at_grad_argmax)?;
    Ok(d)
}

/// Monitor values of a single state.
#[pyfunction]
fn monitors<'py>(py: Python<'py>, state: &GraphState) -> PyResult<Bound<'py, PyDict>> {
    sample_dict(py, &flow::monitors(&state.inner).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (state, safety = 0.25))]
fn stable_dt(state: &GraphState, safety: f64) -> PyResult<f64> {
    flow::stable_dt(&state.inner, safety).map_err(to_py)
}

fn parse_scheme(scheme: &str) -> PyResult<flow::Scheme> {
    flow::Scheme::from_str(scheme).map_err(PyValueError::new_err)
}

#[pyfunction]
#[pyo3(signature = (state, dt, scheme = "rk4"))]
fn step(state: &GraphState, dt: f64, scheme: &str) -> PyResult<GraphState> {
    Ok(GraphState {
        inner: flow::step(&state.inner, dt, parse_scheme(scheme)?).map_err(to_py)?,
    })
}

#[pyclass]
struct Trajectory {
    inner: flow::Trajectory,
    initial: grid::GraphState,
}

#[pymethods]
impl Trajectory {
    /// Sample times.
    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    #[getter]
    fn samples<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.samples.iter().map(|s| sample_dict(py, s)).collect()
    }

    #[getter]
    fn snapshots(&self) -> Vec<GraphState> {
        self.inner
            .snapshots
            .iter()
            .map(|s| GraphState { inner: s.clone() })
            .collect()
    }

    #[getter]
    fn termination(&self) -> &'static str {
        self.inner.termination.label()
    }

    #[getter]
    fn completed(&self) -> bool {
        self.inner.termination.completed()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(samples={}, snapshots={}, termination={:?}, steps={})",
            self.inner.samples.len(),
            self.inner.snapshots.len(),
            self.inner.termination.label(),
            self.inner.steps
        )
    }
}

#[pyfunction]
#[pyo3(signature = (state, t_end, *, scheme = "rk4", safety = 0.25, sample_stride = 10,
                    max_steps = 1_000_000, snapshot_times = vec![]))]
fn evolve(
    state: &GraphState,
    t_end: f64,
    scheme: &str,
    safety: f64,
    sample_stride: usize,
    max_steps: usize,
    snapshot_times: Vec<f64>,
) -> PyResult<Trajectory> {
    let config = flow::FlowConfig {
        scheme: parse_scheme(scheme)?,
        safety,
        t_end,
        sample_stride,
        max_steps,
        snapshot_times,
    };
    Ok(Trajectory {
        inner: flow::evolve(&state.inner, &config).map_err(to_py)?,
        initial: state.inner.clone(),
    })
}

/// Sup-norm defect of the intrinsic evolution identity at each interior
/// snapshot; needs at least three uniformly spaced snapshots.
#[pyfunction]
#[pyo3(signature = (traj, quantity = "w"))]
fn evolution_residual(traj: &Trajectory, quantity: &str) -> PyResult<Vec<f64>> {
    let q = match quantity {
        "w" => flow::EvolvedQuantity::W,
        "H" | "mean_curvature" => flow::EvolvedQuantity::MeanCurvature,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown quantity {other:?}; expected w or H"
            )))
        }
    };
    flow::evolution_residual(&traj.inner, q).map_err(to_py)
}

#[pyfunction]
fn trace_particles<'py>(
    py: Python<'py>,
    traj: &Trajectory,
    seeds: Vec<(f64, f64)>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let pts: Vec<[f64; 2]> = seeds.iter().map(|&(a, b)| [a, b]).collect();
    flow::trace_particles(&traj.inner, &pts)
        .map_err(to_py)?
        .into_iter()
        .map(|path| {
            let d = PyDict::new(py);
            d.set_item("times", path.times)?;
            d.set_item(
                "positions",
                path.positions.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>(),
            )?;
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn default_tolerance(spacing: f64) -> f64 {
    cert::default_tolerance(spacing)
}

/// Analytic envelopes at time t for the flow started from the given state.
#[pyfunction]
fn envelopes<'py>(py: Python<'py>, state: &GraphState, t: f64) -> PyResult<Bound<'py, PyDict>> {
    let stats = cert::InitialStats::from_state(&state.inner).map_err(to_py)?;
    let env = cert::envelopes(&stats, t).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("y_lo", env.y_lo)?;
    d.set_item("y_hi", env.y_hi)?;
    d.set_item("w_lo", env.w_lo)?;
    d.set_item("v_hi", env.v_hi)?;
    d.set_item("H_lo", env.h_lo)?;
    d.set_item("H_hi", env.h_hi)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (traj, tol = None))]
fn check_certificates<'py>(
    py: Python<'py>,
    traj: &Trajectory,
    tol: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let stats = cert::InitialStats::from_state(&traj.initial).map_err(to_py)?;
    let tol = tol.unwrap_or_else(|| cert::default_tolerance(traj.initial.grid.spacing()));
    let report = cert::check(&traj.inner, &stats, tol);
    let d = PyDict::new(py);
    d.set_item("tol", report.tol)?;
    d.set_item("all_pass", report.all_pass())?;
    let records: Vec<Bound<'py, PyDict>> = report
        .records
        .iter()
        .map(|r| {
            let rd = PyDict::new(py);
            rd.set_item("name", r.name)?;
            rd.set_item("passed", r.passed)?;
            rd.set_item("worst_margin", r.worst_margin)?;
            rd.set_item("worst_t", r.worst_t)?;
            rd.set_item("detail", &r.detail)?;
            Ok(rd)
        })
        .collect::<PyResult<_>>()?;
    d.set_item("records", records)?;
    Ok(d)
}

/// Upper solution of u' = rhs(u) on the given time grid (RK4, 10 substeps
/// per interval). Raises if |u| exceeds blowup_bound.
#[pyfunction]
#[pyo3(signature = (rhs, u0, t_grid, blowup_bound = 1e12))]
fn ode_compare(
    rhs: Bound<'_, PyAny>,
    u0: f64,
    t_grid: Vec<f64>,
    blowup_bound: f64,
) -> PyResult<Vec<f64>> {
    let caught: RefCell<Option<PyErr>> = RefCell::new(None);
    let f = |u: f64| -> f64 {
        if caught.borrow().is_some() {
            return f64::NAN;
        }
        match rhs.call1((u,)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(e) => {
                *caught.borrow_mut() = Some(e);
                f64::NAN
            }
        }
    };
    let result = cert::ode_compare(f, u0, &t_grid, blowup_bound);
    if let Some(e) = caught.into_inner() {
        return Err(e);
    }
    result.map_err(to_py)
}

fn fit_dict<'py>(py: Python<'py>, fit: &decay::DecayFit) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rate", fit.rate)?;
    d.set_item("amplitude", fit.amplitude)?;
    d.set_item("r_squared", fit.r_squared)?;
    d.set_item("window", fit.window)?;
    d.set_item("n_points", fit.n_points)?;
    Ok(d)
}

/// Least-squares exponential rate of a (t, value) series over the trailing
/// window fraction; values at the rounding floor are dropped.
#[pyfunction]
#[pyo3(signature = (series, window_fraction = 0.25))]
fn fit_rate<'py>(
    py: Python<'py>,
    series: Vec<(f64, f64)>,
    window_fraction: f64,
) -> PyResult<Bound<'py, PyDict>> {
    fit_dict(
        py,
        &decay::fit_rate(&series, window_fraction).map_err(to_py)?,
    )
}

#[pyfunction]
#[pyo3(signature = (traj, window_fraction = 0.25))]
fn verify_rates<'py>(
    py: Python<'py>,
    traj: &Trajectory,
    window_fraction: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let stats = cert::InitialStats::from_state(&traj.initial).map_err(to_py)?;
    let report =
        decay::verify_rates_with_window(&traj.inner, &stats, window_fraction);
    let d = PyDict::new(py);
    d.set_item("window_fraction", report.window_fraction)?;
    d.set_item("all_pass", report.all_pass())?;
    let records: Vec<Bound<'py, PyDict>> = report
        .records
        .iter()
        .map(|r| {
            let rd = PyDict::new(py);
            rd.set_item("name", r.name)?;
            rd.set_item("monitor", r.monitor)?;
            rd.set_item("target", r.target)?;
            rd.set_item(
                "fit",
                r.fit.as_ref().map(|f| fit_dict(py, f)).transpose()?,
            )?;
            rd.set_item("relative_deviation", r.relative_deviation)?;
            rd.set_item("status", r.status.label())?;
            rd.set_item("note", &r.note)?;
            Ok(rd)
        })
        .collect::<PyResult<_>>()?;
    d.set_item("records", records)?;
    Ok(d)
}

#[pyfunction]
fn write_snapshot(path: PathBuf, state: &GraphState) -> PyResult<()> {
    io::write_snapshot(&path, &state.inner).map_err(to_py)
}

#[pyfunction]
fn read_snapshot(path: PathBuf) -> PyResult<GraphState> {
    Ok(GraphState {
        inner: io::read_snapshot(&path).map_err(to_py)?,
    })
}

#[pyfunction]
fn write_monitors(path: PathBuf, traj: &Trajectory) -> PyResult<()> {
    io::write_monitors(&path, &traj.inner.samples).map_err(to_py)
}

#[pymodule]
fn imcf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<GraphState>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(initial_state, m)?)?;
    m.add_function(wrap_pyfunction!(mean_curvature, m)?)?;
    m.add_function(wrap_pyfunction!(monitors, m)?)?;
    m.add_function(wrap_pyfunction!(stable_dt, m)?)?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(evolution_residual, m)?)?;
    m.add_function(wrap_pyfunction!(trace_particles, m)?)?;
    m.add_function(wrap_pyfunction!(default_tolerance, m)?)?;
    m.add_function(wrap_pyfunction!(envelopes, m)?)?;
    m.add_function(wrap_pyfunction!(check_certificates, m)?)?;
    m.add_function(wrap_pyfunction!(ode_compare, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_rates, m)?)?;
    m.add_function(wrap_pyfunction!(write_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(read_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(write_monitors, m)?)?;
    m.add("CERTIFICATE_NAMES", cert::CERTIFICATE_NAMES)?;
    m.add("MONITOR_HEADER", io::MONITOR_HEADER)?;
    Ok(())
}
