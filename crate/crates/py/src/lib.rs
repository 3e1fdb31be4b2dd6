//! Python bindings for `qfim-core`.
//!
//! Matrices cross the boundary as nested lists of Python `complex` (or
//! `float`) values; labeled real matrices come back as [`PyLabeledMatrix`].

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qfim_core::chandist::{self, FidelityResult};
use qfim_core::channels::{DensityMatrix, DephasingPhase, KrausChannel, ParamChannel, TwoParamRotation, DEFAULT_SIZE_CAP};
use qfim_core::linalg::{ComplexMatrix, C64};
use qfim_core::qfim::{self, LabeledMatrix, QfiMatrix};
use qfim_core::{cli, maxqfim, scaling, Error};

type Rows = Vec<Vec<C64>>;

fn to_py(err: Error) -> PyErr {
    match cli::exit_code(&err) {
        2 => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn to_matrix(rows: &Rows) -> PyResult<ComplexMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(ComplexMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn from_matrix(m: &ComplexMatrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn to_state(rows: &Rows) -> PyResult<DensityMatrix> {
    DensityMatrix::new(to_matrix(rows)?).map_err(to_py)
}

fn family(name: &str, time: f64) -> PyResult<Box<dyn ParamChannel>> {
    match name {
        "dephasing" => Ok(Box::new(DephasingPhase)),
        "two-param-rotation" => Ok(Box::new(TwoParamRotation { time })),
        other => Err(PyValueError::new_err(format!(
            "unknown family {other:?}; expected \"dephasing\" or \"two-param-rotation\""
        ))),
    }
}

/// A channel given by its Kraus operators.
#[pyclass(name = "Channel", module = "qfim", frozen)]
pub struct PyChannel {
    inner: KrausChannel,
}

#[pymethods]
impl PyChannel {
    #[new]
    fn new(kraus: Vec<Rows>) -> PyResult<Self> {
        let ops = kraus.iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
        Ok(PyChannel {
            inner: KrausChannel::new(ops).map_err(to_py)?,
        })
    }

    /// Phase rotation by `omega` followed by dephasing with coherence `eta`.
    #[staticmethod]
    fn dephasing(omega: f64, eta: f64) -> PyResult<Self> {
        Ok(PyChannel {
            inner: qfim_core::channels::dephasing_phase(omega, eta).map_err(to_py)?,
        })
    }

    /// `exp(−i(x1·σ1 + x2·σ2)·time)`.
    #[staticmethod]
    #[pyo3(signature = (x1, x2, time = 1.0))]
    fn rotation(x1: f64, x2: f64, time: f64) -> PyResult<Self> {
        Ok(PyChannel {
            inner: qfim_core::channels::two_param_rotation(x1, x2, time).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    #[getter]
    fn dim_out(&self) -> usize {
        self.inner.dim_out()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    fn kraus(&self) -> Vec<Rows> {
        self.inner.kraus().iter().map(from_matrix).collect()
    }

    fn apply(&self, rho: Rows) -> PyResult<Rows> {
        let out = self.inner.apply(&to_state(&rho)?).map_err(to_py)?;
        Ok(from_matrix(out.matrix()))
    }

    fn tensor_power(&self, copies: usize) -> PyResult<Self> {
        Ok(PyChannel {
            inner: self.inner.tensor_power(copies, DEFAULT_SIZE_CAP).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Channel(dim_in={}, dim_out={}, rank={})",
            self.inner.dim_in(),
            self.inner.dim_out(),
            self.inner.rank()
        )
    }
}

/// Certified minimum fidelity between two channels.
#[pyclass(name = "FidelityResult", module = "qfim", frozen, get_all)]
pub struct PyFidelityResult {
    f_min: f64,
    lower_bound: f64,
    upper_bound: f64,
    gap: f64,
    /// Optimal reduced probe on the system.
    probe: Rows,
    /// Optimal contraction `W`.
    w: Rows,
}

impl From<FidelityResult> for PyFidelityResult {
    fn from(r: FidelityResult) -> Self {
        PyFidelityResult {
            f_min: r.f_min,
            lower_bound: r.lower_bound,
            upper_bound: r.upper_bound,
            gap: r.gap,
            probe: from_matrix(r.probe_opt.matrix()),
            w: from_matrix(r.w_opt.matrix()),
        }
    }
}

#[pymethods]
impl PyFidelityResult {
    fn __repr__(&self) -> String {
        format!(
            "FidelityResult(f_min={:.12}, bracket=[{:.12}, {:.12}])",
            self.f_min, self.lower_bound, self.upper_bound
        )
    }
}

/// Real symmetric matrix with parameter labels on both axes.
#[pyclass(name = "LabeledMatrix", module = "qfim", frozen)]
pub struct PyLabeledMatrix {
    inner: LabeledMatrix,
}

impl From<LabeledMatrix> for PyLabeledMatrix {
    fn from(inner: LabeledMatrix) -> Self {
        PyLabeledMatrix { inner }
    }
}

#[pymethods]
impl PyLabeledMatrix {
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows()
    }

    fn entry(&self, a: &str, b: &str) -> PyResult<f64> {
        self.inner.entry(a, b).map_err(to_py)
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues()
    }

    fn __repr__(&self) -> String {
        format!("LabeledMatrix(labels={:?}, rows={:?})", self.inner.labels(), self.inner.rows())
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// `Tr√(√ρ₁ ρ₂ √ρ₁)`.
#[pyfunction]
fn fidelity(rho1: Rows, rho2: Rows) -> PyResult<f64> {
    qfim::fidelity(&to_state(&rho1)?, &to_state(&rho2)?).map_err(to_py)
}

/// Minimum output fidelity over purified probes, solved in the primal or
/// dual form.
#[pyfunction]
#[pyo3(signature = (a, b, form = "dual"))]
fn min_fidelity(py: Python<'_>, a: &PyChannel, b: &PyChannel, form: &str) -> PyResult<PyFidelityResult> {
    let solve = match form {
        "dual" => chandist::min_fidelity_dual,
        "primal" => chandist::min_fidelity_primal,
        other => return Err(PyValueError::new_err(format!("form must be \"primal\" or \"dual\", got {other:?}"))),
    };
    let (a, b) = (&a.inner, &b.inner);
    py.detach(|| solve(a, b)).map(Into::into).map_err(to_py)
}

/// Maximal QFIM of a built-in family at `x`.
#[pyfunction]
#[pyo3(signature = (family_name, x, time = 1.0, h = maxqfim::DEFAULT_STEP, richardson = true))]
fn max_qfim(
    py: Python<'_>,
    family_name: &str,
    x: Vec<f64>,
    time: f64,
    h: f64,
    richardson: bool,
) -> PyResult<PyLabeledMatrix> {
    let pch = family(family_name, time)?;
    let report = py
        .detach(|| maxqfim::extract_auto(pch.as_ref(), &x, h, richardson))
        .map_err(to_py)?;
    Ok(report.jmax.0.into())
}

/// Closed-form maximal QFIM of a built-in family.
#[pyfunction]
#[pyo3(signature = (family_name, x, time = 1.0))]
fn analytic_jmax(family_name: &str, x: Vec<f64>, time: f64) -> PyResult<PyLabeledMatrix> {
    let j = match (family_name, x.as_slice()) {
        ("dephasing", [_, eta]) => maxqfim::analytic_dephasing_jmax(*eta),
        ("two-param-rotation", [x1, x2]) => maxqfim::analytic_two_param_jmax(*x1, *x2, time),
        (name, _) => {
            family(name, time)?;
            return Err(PyValueError::new_err(format!("{name} takes two parameters, got {}", x.len())));
        }
    };
    Ok(j.map_err(to_py)?.0.into())
}

/// SLD QFIM of a built-in family at `x` for a probe on system ⊗ ancilla.
#[pyfunction]
#[pyo3(signature = (family_name, x, probe, time = 1.0, h = qfim::DEFAULT_PROBE_STEP))]
fn qfim_of_probe(family_name: &str, x: Vec<f64>, probe: Rows, time: f64, h: f64) -> PyResult<PyLabeledMatrix> {
    let pch = family(family_name, time)?;
    let j: QfiMatrix = qfim::qfim_of_probe(pch.as_ref(), &x, &to_state(&probe)?, h).map_err(to_py)?;
    Ok(j.0.into())
}

/// Covariance floor `Q⁻¹/(8nN)` for `N` parallel dephasing channels.
#[pyfunction]
#[pyo3(signature = (eta, copies, n = 1, q_form = "corrected"))]
fn sql_cov_bound(eta: f64, copies: usize, n: usize, q_form: &str) -> PyResult<PyLabeledMatrix> {
    let form = match q_form {
        "published" => cli::QForm::Published,
        "corrected" => cli::QForm::Corrected,
        other => return Err(PyValueError::new_err(format!("q_form must be \"published\" or \"corrected\", got {other:?}"))),
    };
    let q = cli::dephasing_q(form, eta).map_err(to_py)?;
    Ok(scaling::sql_cov_bound(&q, copies, n).map_err(to_py)?.0.into())
}

/// Lower bounds on `Var₁·Var₂`, `det Cov` and each variance for a 2×2 `J^max`.
#[pyfunction]
#[pyo3(signature = (jmax, n = 1))]
fn tradeoff_bounds(jmax: &PyLabeledMatrix, n: usize) -> PyResult<(f64, f64, (f64, f64))> {
    let j = QfiMatrix::new(jmax.inner.labels().to_vec(), jmax.inner.matrix().clone()).map_err(to_py)?;
    let t = maxqfim::tradeoff_bounds(&j, n).map_err(to_py)?;
    Ok((
        t.var_product_bound,
        t.det_bound,
        (t.per_param_bounds[0], t.per_param_bounds[1]),
    ))
}

#[pymodule]
#[pyo3(name = "qfim")]
fn qfim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChannel>()?;
    m.add_class::<PyFidelityResult>()?;
    m.add_class::<PyLabeledMatrix>()?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(min_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(max_qfim, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_jmax, m)?)?;
    m.add_function(wrap_pyfunction!(qfim_of_probe, m)?)?;
    m.add_function(wrap_pyfunction!(sql_cov_bound, m)?)?;
    m.add_function(wrap_pyfunction!(tradeoff_bounds, m)?)?;
    Ok(())
}
