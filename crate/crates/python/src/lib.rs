//! Python module `qprobe`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qprobe_core::closedform::{self, TlsProblem};
use qprobe_core::model::DEFAULT_DEGENERACY_TOL;
use qprobe_core::superop::{SolveOptions, DEFAULT_ZERO_TOL};
use qprobe_core::trajectory::{self, DEFAULT_N_ABORT};
use qprobe_core::{Error, IntervalDistribution, QuantumModel, SuperoperatorSet};

create_exception!(qprobe, NumericalError, PyRuntimeError, "Ill-conditioned, divergent or degenerate computation.");

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidModel(_) | Error::InvalidDistribution(_) | Error::InvalidArgument(_) | Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => NumericalError::new_err(e.to_string()),
    }
}

/// Hamiltonian with initial and detection states.
#[pyclass(name = "Model", module = "qprobe", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel(QuantumModel);

#[pymethods]
impl PyModel {
    /// Dense model from a Hermitian matrix and two unit vectors.
    #[new]
    #[pyo3(signature = (hamiltonian, psi_in, psi_d, label = "dense"))]
    fn new(hamiltonian: Vec<Vec<Complex64>>, psi_in: Vec<Complex64>, psi_d: Vec<Complex64>, label: &str) -> PyResult<Self> {
        let n = hamiltonian.len();
        if hamiltonian.iter().any(|row| row.len() != n) {
            return Err(PyValueError::new_err("hamiltonian must be a square list of rows"));
        }
        let h = DMatrix::from_fn(n, n, |i, j| hamiltonian[i][j]);
        QuantumModel::new(h, DVector::from_vec(psi_in), DVector::from_vec(psi_d), label)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (l, x_in, x_d, gamma = 1.0))]
    fn ring(l: usize, x_in: usize, x_d: usize, gamma: f64) -> PyResult<Self> {
        QuantumModel::ring(l, gamma, x_in, x_d).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (gamma = 1.0, arrival = false))]
    fn two_level(gamma: f64, arrival: bool) -> PyResult<Self> {
        QuantumModel::two_level(gamma, arrival).map(Self).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn label(&self) -> &str {
        &self.0.label
    }

    #[getter]
    fn is_return(&self) -> bool {
        self.0.is_return()
    }

    /// Bright energies with overlaps `p = |<E|psi_d>|^2` and `q = |<E|psi_in>|^2`.
    #[pyo3(signature = (degeneracy_tol = DEFAULT_DEGENERACY_TOL))]
    fn spectrum<'py>(&self, py: Python<'py>, degeneracy_tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let s = self.0.spectral_reduce(degeneracy_tol).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("energies", s.energies)?;
        d.set_item("p", s.p)?;
        d.set_item("q", s.q)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Model({:?})", self.0.label)
    }
}

/// Distribution of the waiting time between detection attempts.
#[pyclass(name = "Distribution", module = "qprobe", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDistribution(IntervalDistribution);

#[pymethods]
impl PyDistribution {
    #[staticmethod]
    fn fixed(tau: f64) -> PyResult<Self> {
        IntervalDistribution::fixed(tau).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn exponential(mean: f64) -> PyResult<Self> {
        IntervalDistribution::exponential(mean).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn gamma(alpha: f64, mean: f64) -> PyResult<Self> {
        IntervalDistribution::gamma(alpha, mean).map(Self).map_err(py_err)
    }

    fn with_mean(&self, mean: f64) -> PyResult<Self> {
        self.0.with_mean(mean).map(Self).map_err(py_err)
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.0.mean()
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.0.variance()
    }

    /// `<exp(i delta tau)>`.
    fn charfn(&self, delta: f64) -> Complex64 {
        self.0.charfn(delta)
    }

    fn __repr__(&self) -> String {
        match self.0 {
            IntervalDistribution::Fixed { tau } => format!("Distribution.fixed({tau})"),
            IntervalDistribution::Exponential { mean } => format!("Distribution.exponential({mean})"),
            IntervalDistribution::Gamma { alpha, mean } => format!("Distribution.gamma({alpha}, {mean})"),
        }
    }
}

#[pyclass(name = "Stats", module = "qprobe", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyStats {
    p_det: f64,
    n_mean: f64,
    n_sq: f64,
    t_mean: f64,
    t_sq: f64,
    n_var: f64,
    t_var: f64,
    j_condition: f64,
    reduced_dim: usize,
    pseudo_inverse: bool,
}

#[pymethods]
impl PyStats {
    fn __repr__(&self) -> String {
        format!(
            "Stats(p_det={}, n_mean={}, n_sq={}, t_mean={}, t_sq={})",
            self.p_det, self.n_mean, self.n_sq, self.t_mean, self.t_sq
        )
    }
}

fn superop(model: &PyModel, dist: &PyDistribution, degeneracy_tol: f64) -> PyResult<SuperoperatorSet> {
    let spec = model.0.spectral_reduce(degeneracy_tol).map_err(py_err)?;
    SuperoperatorSet::build(&spec, &dist.0).map_err(py_err)
}

/// Exact detection probability and moments of the attempt number and time.
#[pyfunction]
#[pyo3(signature = (model, dist, pseudo_inverse = false, degeneracy_tol = DEFAULT_DEGENERACY_TOL))]
fn detection_stats(model: &PyModel, dist: &PyDistribution, pseudo_inverse: bool, degeneracy_tol: f64) -> PyResult<PyStats> {
    let opts = SolveOptions {
        pseudo_inverse,
        ..SolveOptions::default()
    };
    let s = superop(model, dist, degeneracy_tol)?.detection_stats(&opts).map_err(py_err)?;
    Ok(PyStats {
        p_det: s.p_det,
        n_mean: s.n_mean,
        n_sq: s.n_sq,
        t_mean: s.t_mean,
        t_sq: s.t_sq,
        n_var: s.n_var,
        t_var: s.t_var,
        j_condition: s.j_condition,
        reduced_dim: s.reduced_dim,
        pseudo_inverse: s.pseudo_inverse,
    })
}

/// Interval-averaged first-detection probabilities `<F_n>`, n = 1..nmax.
#[pyfunction]
#[pyo3(signature = (model, dist, nmax, degeneracy_tol = DEFAULT_DEGENERACY_TOL))]
fn fn_series(model: &PyModel, dist: &PyDistribution, nmax: usize, degeneracy_tol: f64) -> PyResult<Vec<f64>> {
    superop(model, dist, degeneracy_tol)?.fn_series(nmax).map_err(py_err)
}

/// Counts of zero and non-zero eigenvalues of the attempt superoperator.
#[pyfunction]
#[pyo3(signature = (model, dist, tol = DEFAULT_ZERO_TOL, degeneracy_tol = DEFAULT_DEGENERACY_TOL))]
fn zero_mode_census<'py>(
    py: Python<'py>,
    model: &PyModel,
    dist: &PyDistribution,
    tol: f64,
    degeneracy_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = superop(model, dist, degeneracy_tol)?.zero_mode_census(tol).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("n_zero", c.n_zero)?;
    d.set_item("n_nonzero", c.n_nonzero)?;
    d.set_item("slowest_decay", c.slowest_decay)?;
    Ok(d)
}

/// Energy pairs `(i, j, gap, |1 - charfn(gap)|)` that make the resolvent singular.
#[pyfunction]
#[pyo3(signature = (model, dist, degeneracy_tol = DEFAULT_DEGENERACY_TOL))]
fn exceptional_pairs(model: &PyModel, dist: &PyDistribution, degeneracy_tol: f64) -> PyResult<Vec<(usize, usize, f64, f64)>> {
    Ok(superop(model, dist, degeneracy_tol)?
        .exceptional_pairs()
        .into_iter()
        .map(|p| (p.i, p.j, p.energy_gap, p.distance))
        .collect())
}

/// Closed-form two-level-system moments.
#[pyfunction]
#[pyo3(signature = (dist, gamma = 1.0, arrival = false))]
fn tls_stats<'py>(py: Python<'py>, dist: &PyDistribution, gamma: f64, arrival: bool) -> PyResult<Bound<'py, PyDict>> {
    let problem = if arrival { TlsProblem::Arrival } else { TlsProblem::Return };
    let s = closedform::tls_stats(problem, &dist.0, gamma).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("p_det", s.p_det)?;
    d.set_item("n_mean", s.n_mean)?;
    d.set_item("n_sq", s.n_sq)?;
    d.set_item("t_mean", s.t_mean)?;
    d.set_item("t_sq", s.t_sq)?;
    d.set_item("nbar_variance", s.nbar_variance)?;
    Ok(d)
}

/// Closed-form ring moment under exponential intervals: `which` is
/// "n_mean", "n_sq" or "t_sq".
#[pyfunction]
#[pyo3(signature = (which, l, x_d, mean, gamma = 1.0))]
fn ring_exp(which: &str, l: usize, x_d: usize, mean: f64, gamma: f64) -> PyResult<f64> {
    let f = match which {
        "n_mean" => closedform::ring_nbar_exp,
        "n_sq" => closedform::ring_nsq_exp,
        "t_sq" => closedform::ring_tsq_exp,
        _ => return Err(PyValueError::new_err(format!("unknown moment {which:?}"))),
    };
    f(l, x_d, gamma, mean).map(|v| v.value).map_err(py_err)
}

/// Monte Carlo over interval sequences. `mode` is "per_realization" or
/// "bernoulli"; the result carries moment estimates and the `<F_n>` estimate.
#[pyfunction]
#[pyo3(signature = (model, dist, n_real, seed = 0, mode = "per_realization", n_cut = 1000, n_abort = DEFAULT_N_ABORT, bins = 50))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo<'py>(
    py: Python<'py>,
    model: &PyModel,
    dist: &PyDistribution,
    n_real: usize,
    seed: u64,
    mode: &str,
    n_cut: usize,
    n_abort: u64,
    bins: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let (m, d) = (&model.0, &dist.0);
    let ens = py
        .detach(|| match mode {
            "per_realization" => trajectory::run_per_realization(m, d, n_real, n_cut, seed, false),
            "bernoulli" => trajectory::run_bernoulli(m, d, n_real, seed, n_abort, bins),
            _ => Err(Error::InvalidArgument(format!("unknown mode {mode:?}"))),
        })
        .map_err(py_err)?;
    let s = ens.summary();
    let out = PyDict::new(py);
    out.set_item("n_real", s.n_real)?;
    out.set_item("censored", s.censored)?;
    out.set_item("n_mean", s.n.mean)?;
    out.set_item("n_mean_stderr", s.n.mean_stderr)?;
    out.set_item("n_variance", s.n.variance)?;
    if let Some(t) = s.t {
        out.set_item("t_mean", t.mean)?;
        out.set_item("t_mean_stderr", t.mean_stderr)?;
    }
    if let Some(p) = s.p_det {
        out.set_item("p_det", p)?;
    }
    out.set_item("fn_mean", ens.fn_mean)?;
    out.set_item("fn_stderr", ens.fn_stderr)?;
    Ok(out)
}

#[pymodule]
fn qprobe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyDistribution>()?;
    m.add_class::<PyStats>()?;
    m.add_function(wrap_pyfunction!(detection_stats, m)?)?;
    m.add_function(wrap_pyfunction!(fn_series, m)?)?;
    m.add_function(wrap_pyfunction!(zero_mode_census, m)?)?;
    m.add_function(wrap_pyfunction!(exceptional_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(tls_stats, m)?)?;
    m.add_function(wrap_pyfunction!(ring_exp, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    Ok(())
}
