//! Python bindings: a `Lattice` handle for propagation and spectral queries,
//! plus the config runner and verification suites.

use std::path::PathBuf;

use ::lattice_transport::experiment::{self, run_file, Verdict};
use ::lattice_transport::operators::commutator_q_h_norm;
use ::lattice_transport::propagation::{Propagator, DEFAULT_TOLERANCE};
use ::lattice_transport::spectral::{dense_eigendecomposition, mourre_form_min, EnergyInterval};
use ::lattice_transport::transport::{record_moments, RecordSpec};
use ::lattice_transport::{BoxGeometry, Error, Hamiltonian, LatticeState, PotentialSpec};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NormDrift { .. }
        | Error::ToleranceUnachievable { .. }
        | Error::Eigensolver(_)
        | Error::QuadratureNotConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// `H = -Δ + V` on the box `{-L..L}^d`.
#[pyclass(frozen)]
struct Lattice {
    h: Hamiltonian,
}

impl Lattice {
    fn state(&self, amplitudes: Vec<Complex64>) -> PyResult<LatticeState> {
        LatticeState::from_amplitudes(self.h.geometry(), amplitudes).map_err(py_err)
    }
}

#[pymethods]
impl Lattice {
    #[new]
    #[pyo3(signature = (dim, radius, family = "zero", c = 1.0, alpha = 2.0, k = 1.0, disorder = 1.0, seed = 0, pattern = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dim: usize,
        radius: usize,
        family: &str,
        c: f64,
        alpha: f64,
        k: f64,
        disorder: f64,
        seed: u64,
        pattern: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let spec = match family {
            "zero" => PotentialSpec::Zero,
            "power_law" => PotentialSpec::PowerLaw { c, alpha },
            "wigner_von_neumann" => PotentialSpec::WignerVonNeumann { c, k },
            "anderson" => PotentialSpec::Anderson { lambda: disorder, seed },
            "periodic" => PotentialSpec::Periodic { pattern: pattern.unwrap_or_default() },
            other => return Err(PyValueError::new_err(format!("unknown potential family `{other}`"))),
        };
        let g = BoxGeometry::new(dim, radius).map_err(py_err)?;
        let field = ::lattice_transport::potentials::realize(&spec, &g).map_err(py_err)?;
        Ok(Self { h: Hamiltonian::new(field) })
    }

    #[getter]
    fn sites(&self) -> usize {
        self.h.total_sites()
    }

    fn potential(&self) -> Vec<f64> {
        self.h.potential().values().to_vec()
    }

    fn index_of(&self, site: Vec<i64>) -> Option<usize> {
        self.h.geometry().index_of(&site)
    }

    fn delta(&self, site: Vec<i64>) -> PyResult<Vec<Complex64>> {
        Ok(LatticeState::delta(self.h.geometry(), &site).map_err(py_err)?.into_amplitudes())
    }

    fn apply(&self, amplitudes: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        Ok(self.h.apply(&self.state(amplitudes)?).map_err(py_err)?.into_amplitudes())
    }

    /// `e^{-itH} ψ` by Chebyshev expansion.
    #[pyo3(signature = (amplitudes, t, tolerance = DEFAULT_TOLERANCE))]
    fn evolve(&self, py: Python<'_>, amplitudes: Vec<Complex64>, t: f64, tolerance: f64) -> PyResult<Vec<Complex64>> {
        let psi = self.state(amplitudes)?;
        py.detach(|| {
            let mut prop = Propagator::new(&self.h, None, tolerance)?;
            prop.evolve(&psi, 0.0, t)
        })
        .map(LatticeState::into_amplitudes)
        .map_err(py_err)
    }

    /// `‖ψ‖_r = ‖(1+|n|²)^{r/2} ψ‖`.
    fn weighted_norm(&self, amplitudes: Vec<Complex64>, r: f64) -> PyResult<f64> {
        Ok(self.state(amplitudes)?.weighted_norm_sq(r).map_err(py_err)?.sqrt())
    }

    /// Rows `[‖ψ(t)‖_r for r in orders]`, one per time.
    fn moments(&self, py: Python<'_>, amplitudes: Vec<Complex64>, times: Vec<f64>, orders: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let u = self.state(amplitudes)?;
        let horizon = times.iter().cloned().fold(0.0, f64::max);
        py.detach(|| {
            let mut prop = Propagator::new(&self.h, None, DEFAULT_TOLERANCE)?;
            let spec = RecordSpec { orders, times, ball_radii: vec![], horizon };
            record_moments(&mut prop, &u, &spec)
        })
        .map(|s| s.samples.into_iter().map(|x| x.norms).collect())
        .map_err(py_err)
    }

    #[pyo3(signature = (cap = 4096))]
    fn eigenvalues(&self, py: Python<'_>, cap: usize) -> PyResult<Vec<f64>> {
        py.detach(|| dense_eigendecomposition(&self.h, cap))
            .map(|d| d.eigenvalues().to_vec())
            .map_err(py_err)
    }

    /// Minimum of the compressed Mourre form on `(lo, hi)`.
    #[pyo3(signature = (lo, hi, cap = 4096))]
    fn mourre_min(&self, py: Python<'_>, lo: f64, hi: f64, cap: usize) -> PyResult<f64> {
        py.detach(|| {
            let dec = dense_eigendecomposition(&self.h, cap)?;
            mourre_form_min(&dec, &self.h, &EnergyInterval::open(lo, hi)?)
        })
        .map(|m| m.min_rayleigh)
        .map_err(py_err)
    }

    /// Power-iteration estimate of `‖[Q,H]‖`.
    #[pyo3(signature = (max_iter = 500, seed = 1))]
    fn commutator_norm(&self, max_iter: usize, seed: u64) -> f64 {
        commutator_q_h_norm(&self.h, max_iter, seed).norm
    }
}

/// Runs a config file; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (config, out = None))]
fn run<'py>(py: Python<'py>, config: PathBuf, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let o = py.detach(|| run_file(&config, out.as_deref())).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("status", o.status.code())?;
    d.set_item("dir", o.dir.to_string_lossy().into_owned())?;
    d.set_item("config_hash", o.config_hash)?;
    d.set_item("slope", o.summary.slope)?;
    d.set_item("ratio_min", o.summary.ratio_min)?;
    d.set_item("ratio_max", o.summary.ratio_max)?;
    d.set_item("min_rayleigh", o.summary.min_rayleigh)?;
    d.set_item("failures", o.failures.into_iter().map(|f| f.check).collect::<Vec<_>>())?;
    Ok(d)
}

/// Runs a verification suite; returns `(verdict, name, detail)` triples.
#[pyfunction]
fn verify(py: Python<'_>, suite: &str) -> PyResult<Vec<(String, String, String)>> {
    let suite = suite.parse().map_err(py_err)?;
    let checks = py.detach(|| experiment::verify(suite, |_| {}));
    Ok(checks
        .into_iter()
        .map(|c| {
            let v = match c.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::Info => "INFO",
            };
            (v.to_string(), format!("{}/{}", c.suite, c.name), c.detail)
        })
        .collect())
}

#[pymodule(name = "lattice_transport")]
pub fn lattice_transport_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Lattice>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
