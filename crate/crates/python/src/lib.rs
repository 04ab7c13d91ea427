//! Python bindings. Results that have a JSON form in the library are
//! returned as plain dictionaries.

use std::f64::consts::FRAC_PI_2;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use recoilfree::linalg::{rx, Mat2};
use recoilfree::model::{apply_intensity_deviation, IntensityDeviation};
use recoilfree::optimizer::{optimize_mikado, optimize_recoil_free, OptimizeConfig};
use recoilfree::oracles::{self, BlochInit};
use recoilfree::propagator::{evolve_columns, PropagationConfig};
use recoilfree::rb::{idealized_resources, mossbauer_resources, pulse_resources, run_rb, GateMode, RBConfig, DEFAULT_THETA_ENT};
use recoilfree::tomography::{process_tomography_columns, Target};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn target(name: &str) -> PyResult<Target> {
    match name {
        "rx90" => Ok(Target::Unitary(rx(FRAC_PI_2))),
        "mikado" => Ok(Target::Mikado),
        "identity" => Ok(Target::Unitary(Mat2::identity())),
        other => Err(err(format!("unknown target `{other}` (expected rx90, mikado or identity)"))),
    }
}

/// Trap and drive parameters; frequencies are angular (rad/s).
#[pyclass(name = "SystemParams", module = "recoilfree_py", from_py_object)]
#[derive(Clone)]
struct PySystemParams {
    inner: recoilfree::model::SystemParams,
}

#[pymethods]
impl PySystemParams {
    #[new]
    fn new(omega_rabi: f64, omega_trap: f64, eta: f64, p0: f64) -> PyResult<Self> {
        Ok(Self { inner: recoilfree::model::SystemParams::new(omega_rabi, omega_trap, eta, p0).map_err(err)? })
    }

    #[staticmethod]
    fn sr88() -> Self {
        Self { inner: recoilfree::model::SystemParams::sr88() }
    }

    fn with_p0(&self, p0: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.with_p0(p0).map_err(err)? })
    }

    fn with_eta(&self, eta: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.with_eta(eta).map_err(err)? })
    }

    #[getter]
    fn omega_rabi(&self) -> f64 {
        self.inner.omega_rabi
    }

    #[getter]
    fn omega_trap(&self) -> f64 {
        self.inner.omega_trap
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn p0(&self) -> f64 {
        self.inner.p0
    }

    #[getter]
    fn n_fock(&self) -> usize {
        self.inner.n_fock
    }

    fn xi(&self) -> f64 {
        self.inner.xi()
    }

    fn dressed_rabi(&self) -> f64 {
        self.inner.dressed_rabi()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("SystemParams(omega_rabi={}, omega_trap={}, eta={}, p0={}, n_fock={})", p.omega_rabi, p.omega_trap, p.eta, p.p0, p.n_fock)
    }
}

/// Phase-modulated pulse.
#[pyclass(name = "PulseShape", module = "recoilfree_py", from_py_object)]
#[derive(Clone)]
struct PyPulseShape {
    inner: recoilfree::pulse::PulseShape,
}

#[pymethods]
impl PyPulseShape {
    #[staticmethod]
    fn fourier(duration: f64, a: Vec<f64>, b: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: recoilfree::pulse::PulseShape::fourier(duration, a, b).map_err(err)? })
    }

    #[staticmethod]
    fn zeros(duration: f64, n_c: usize) -> PyResult<Self> {
        Ok(Self { inner: recoilfree::pulse::PulseShape::zeros(duration, n_c).map_err(err)? })
    }

    #[staticmethod]
    fn constant(duration: f64, phase: f64) -> PyResult<Self> {
        Ok(Self { inner: recoilfree::pulse::PulseShape::constant(duration, phase).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: recoilfree::pulse::PulseShape::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn phase_at(&self, t: f64) -> PyResult<f64> {
        self.inner.phase_at(t).map_err(err)
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    #[getter]
    fn n_c(&self) -> usize {
        self.inner.n_c
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        self.inner.a.clone()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b.clone()
    }

    fn __repr__(&self) -> String {
        format!("PulseShape(duration={}, n_c={})", self.inner.duration, self.inner.n_c)
    }
}

/// Process tomography of `pulse`; returns the process record as a dict.
#[pyfunction]
#[pyo3(signature = (pulse, params, target="rx90", rel_dev=0.0))]
fn tomography(py: Python<'_>, pulse: &PyPulseShape, params: &PySystemParams, target: &str, rel_dev: f64) -> PyResult<Py<PyAny>> {
    let t = self::target(target)?;
    let record = py
        .detach(|| -> recoilfree::Result<_> {
            let p = apply_intensity_deviation(&params.inner, IntensityDeviation::new(rel_dev)?)?;
            let (y, nf) = evolve_columns(&pulse.inner, &p, &PropagationConfig::default())?;
            Ok(process_tomography_columns(&y, nf, &p.with_n_fock(nf)?, &t)?.record())
        })
        .map_err(err)?;
    to_py(py, &record)
}

/// Optimizes a pulse of the given duration (seconds). Returns the pulse and
/// a dict with the final cost components and convergence flags.
#[pyfunction]
#[pyo3(signature = (params, duration, target="rx90", n_c=50, restarts=4, max_iterations=300, seed=0))]
#[allow(clippy::too_many_arguments)]
fn optimize(
    py: Python<'_>,
    params: &PySystemParams,
    duration: f64,
    target: &str,
    n_c: usize,
    restarts: usize,
    max_iterations: usize,
    seed: u64,
) -> PyResult<(PyPulseShape, Py<PyAny>)> {
    let t = self::target(target)?;
    let mut cfg = if t == Target::Mikado { OptimizeConfig::mikado(duration) } else { OptimizeConfig::recoil_free(duration) };
    cfg.target = t;
    cfg.n_c = n_c;
    cfg.restarts = restarts;
    cfg.max_iterations = max_iterations;
    cfg.seed = seed;
    cfg.validate().map_err(err)?;
    let (pulse, summary) = py
        .detach(|| -> recoilfree::Result<_> {
            if cfg.target == Target::Mikado {
                let m = optimize_mikado(&cfg, &params.inner)?;
                let mean = m.mean_components();
                let summary = serde_json::json!({
                    "j_ent": mean.j_ent, "j_uni": mean.j_uni, "j_mot": mean.j_mot,
                    "alpha": m.alpha, "beta": m.beta,
                    "converged": m.optimization.converged, "below_qsl": m.optimization.below_qsl,
                });
                Ok((m.pulse, summary))
            } else {
                let (pulse, r, outcome) = optimize_recoil_free(&cfg, &params.inner)?;
                let summary = serde_json::json!({
                    "j_ent": r.j_ent, "j_uni": r.j_uni, "j_mot": r.j_mot,
                    "converged": outcome.converged, "below_qsl": outcome.below_qsl,
                });
                Ok((pulse, summary))
            }
        })
        .map_err(err)?;
    Ok((PyPulseShape { inner: pulse }, to_py(py, &summary)?))
}

/// Randomized benchmarking. `mode` is `mikado` (needs `pulse`),
/// `mossbauer` or `idealized-L4`. Returns the series as a dict.
#[pyfunction]
#[pyo3(signature = (params, mode, depth_max, n_circuits, seed=0, pulse=None, theta_ent=None))]
fn benchmark(
    py: Python<'_>,
    params: &PySystemParams,
    mode: &str,
    depth_max: usize,
    n_circuits: usize,
    seed: u64,
    pulse: Option<PyPulseShape>,
    theta_ent: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let mode: GateMode = mode.parse().map_err(err)?;
    let cfg = RBConfig::new(mode, depth_max, n_circuits, params.inner.p0, seed);
    cfg.validate().map_err(err)?;
    let prop = PropagationConfig::default();
    let series = py
        .detach(|| -> recoilfree::Result<_> {
            let resources = match mode {
                GateMode::IdealizedL4 => idealized_resources(theta_ent.unwrap_or(DEFAULT_THETA_ENT)),
                GateMode::Mossbauer => mossbauer_resources(&params.inner, &prop)?,
                GateMode::Mikado => {
                    let p = pulse.as_ref().ok_or_else(|| recoilfree::Error::InvalidParameter("mikado mode needs a pulse".into()))?;
                    pulse_resources(&p.inner, &params.inner, &prop)?
                }
            };
            run_rb(&cfg, &params.inner, &resources, &prop)
        })
        .map_err(err)?;
    to_py(py, &series)
}

/// First-order phase-space trajectory `(x, p)` of the motional centroid for
/// the qubit initialized at Bloch angles `(theta, phi_b)`.
#[pyfunction]
fn trajectory(pulse: &PyPulseShape, params: &PySystemParams, theta: f64, phi_b: f64, times: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let pts = oracles::semiclassical_trajectory(&pulse.inner, &params.inner, BlochInit::new(theta, phi_b), &times).map_err(err)?;
    Ok(pts.into_iter().map(|q| (q.x, q.p)).collect())
}

/// Closed-form centroid under a constant-phase pulse.
#[pyfunction]
fn mossbauer_trajectory(params: &PySystemParams, theta: f64, phi_b: f64, t: f64) -> PyResult<(f64, f64)> {
    let q = oracles::mossbauer_trajectory(&params.inner, BlochInit::new(theta, phi_b), t).map_err(err)?;
    Ok((q.x, q.p))
}

/// Second-order perturbative expansion of the pulse as a dict.
#[pyfunction]
fn expansion(py: Python<'_>, pulse: &PyPulseShape, params: &PySystemParams) -> PyResult<Py<PyAny>> {
    let report = recoilfree::perturbation::expansion_report(&pulse.inner, &params.inner).map_err(err)?;
    to_py(py, &report.record())
}

/// Saturation value of the entanglement infidelity under Haar-random
/// deviations.
#[pyfunction]
fn rb_saturation(p0: f64) -> f64 {
    oracles::rb_saturation_exact(p0)
}

#[pymodule]
fn recoilfree_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyPulseShape>()?;
    m.add_function(wrap_pyfunction!(tomography, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(mossbauer_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(expansion, m)?)?;
    m.add_function(wrap_pyfunction!(rb_saturation, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
