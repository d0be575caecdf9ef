//! Python bindings: exact moments, limits, designs, OLS functionals, Monte
//! Carlo estimates and rate reports.
//!
//! Exact rationals cross as `fractions.Fraction`; values of the form
//! `c * sqrt(x)` as [`ExactValue`]; structured reports as plain dicts.

use momentrate::design::{self as design_lab, AlphaRule, ColumnLaw, DesignSpec};
use momentrate::exact::{ExactRational, Radical};
use momentrate::ols::{self, ErrorLaw, XiSpec};
use momentrate::profile::{self, MomentProfile};
use momentrate::{combinat, moments, montecarlo, rate, Error};
use num_bigint::BigUint;
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(momentrate, DomainError, PyValueError, "Arguments outside the domain of an operation.");
create_exception!(momentrate, NumericError, PyArithmeticError, "A floating point check failed.");

fn to_py(e: Error) -> PyErr {
    if e.is_numeric() {
        NumericError::new_err(e.to_string())
    } else {
        DomainError::new_err(e.to_string())
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for momentrate::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn to_dict<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| DomainError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// `coeff * sqrt(radicand)` with rational `coeff` and `radicand`.
#[pyclass(frozen, module = "momentrate", skip_from_py_object)]
#[derive(Clone)]
pub struct ExactValue {
    inner: Radical,
}

#[pymethods]
impl ExactValue {
    #[getter]
    fn coeff(&self) -> ExactRational {
        self.inner.coeff().clone()
    }

    #[getter]
    fn radicand(&self) -> ExactRational {
        self.inner.radicand().clone()
    }

    /// The value as a `Fraction`, or `None` when it is irrational.
    fn as_fraction(&self) -> Option<ExactRational> {
        self.inner.to_rational()
    }

    fn is_rational(&self) -> bool {
        self.inner.is_rational()
    }

    fn __float__(&self) -> f64 {
        self.inner.to_f64()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("ExactValue({})", self.inner)
    }

    fn __eq__(&self, other: &ExactValue) -> bool {
        self.inner == other.inner
    }
}

impl From<Radical> for ExactValue {
    fn from(inner: Radical) -> Self {
        ExactValue { inner }
    }
}

/// Central moments of a centered law, exact up to a maximal order.
#[pyclass(name = "MomentProfile", frozen, module = "momentrate", skip_from_py_object)]
#[derive(Clone)]
pub struct PyMomentProfile {
    inner: MomentProfile,
}

#[pymethods]
impl PyMomentProfile {
    /// `normal`, `uniform`, `exp1`, `rademacher` or `bern(q)`.
    #[staticmethod]
    fn named(name: &str) -> PyResult<Self> {
        Ok(PyMomentProfile { inner: profile::named(name).py_err()? })
    }

    /// Standardized moments from order 2 on; the first must be 1.
    #[staticmethod]
    #[pyo3(signature = (moments, name = "inline"))]
    fn from_standardized(moments: Vec<ExactRational>, name: &str) -> PyResult<Self> {
        Ok(PyMomentProfile { inner: MomentProfile::from_standardized(name, moments).py_err()? })
    }

    /// Central moments from order 2 on.
    #[staticmethod]
    #[pyo3(signature = (moments, name = "inline"))]
    fn from_central(moments: Vec<ExactRational>, name: &str) -> PyResult<Self> {
        Ok(PyMomentProfile { inner: MomentProfile::from_central(name, moments).py_err()? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn max_order(&self) -> usize {
        self.inner.max_order()
    }

    fn central(&self, order: usize) -> PyResult<ExactRational> {
        self.inner.central(order).cloned().py_err()
    }

    fn kurtosis(&self) -> PyResult<ExactRational> {
        self.inner.kurtosis().py_err()
    }

    fn skewness(&self) -> PyResult<ExactValue> {
        Ok(self.inner.skewness().py_err()?.into())
    }

    fn __repr__(&self) -> String {
        format!("MomentProfile({:?}, max_order={})", self.inner.name(), self.inner.max_order())
    }
}

/// Partitions of `r` into parts of size at least 2.
#[pyfunction]
fn partitions(r: u32) -> PyResult<Vec<Vec<u32>>> {
    Ok(combinat::partitions_min2(r).py_err()?.into_iter().map(|p| p.parts().to_vec()).collect())
}

/// Coefficient of the partition's term in `E(S_n^r)`.
#[pyfunction]
fn expansion_coefficient(parts: Vec<u32>, n: u64) -> PyResult<BigUint> {
    let p = combinat::Partition::new(parts).py_err()?;
    Ok(combinat::expansion_coefficient(&p, n))
}

#[pyfunction]
fn moment_s(r: u32, n: u64, profile: &PyMomentProfile) -> PyResult<ExactValue> {
    Ok(moments::moment_s(r, n, &profile.inner).py_err()?.into())
}

#[pyfunction]
fn moment_z(r: u32, n: u64, profile: &PyMomentProfile) -> PyResult<ExactValue> {
    Ok(moments::moment_z(r, n, &profile.inner).py_err()?.into())
}

#[pyfunction]
fn gaussian_moment(r: u32) -> BigUint {
    moments::gaussian_moment(r)
}

/// `lim n (E(Z_n^{2k}) - (2k-1)!!)`.
#[pyfunction]
fn limit_even(k: u32, profile: &PyMomentProfile) -> PyResult<ExactRational> {
    moments::limit_even(k, &profile.inner).py_err()
}

/// Alternative closed form of the even limit, for comparison.
#[pyfunction]
fn limit_even_printed(k: u32, profile: &PyMomentProfile) -> PyResult<ExactRational> {
    moments::limit_even_printed(k, &profile.inner).py_err()
}

/// `lim sqrt(n) E(Z_n^{2k+1})`.
#[pyfunction]
fn limit_odd(k: u32, profile: &PyMomentProfile) -> PyResult<ExactValue> {
    Ok(moments::limit_odd(k, &profile.inner).py_err()?.into())
}

/// A design matrix together with the spec that generated it.
#[pyclass(name = "Design", frozen, module = "momentrate", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDesign {
    inner: design_lab::Design,
}

fn column_law(name: &str) -> PyResult<ColumnLaw> {
    match name {
        "normal" => Ok(ColumnLaw::Normal),
        "uniform" => Ok(ColumnLaw::Uniform),
        "rademacher" => Ok(ColumnLaw::Rademacher),
        other => Err(DomainError::new_err(format!("unknown column law {other:?}"))),
    }
}

#[pymethods]
impl PyDesign {
    /// Builds a design from its JSON spec `{family, params, n, p, seed}`.
    #[staticmethod]
    fn from_json(spec: &str) -> PyResult<Self> {
        let spec: DesignSpec = serde_json::from_str(spec).map_err(|e| DomainError::new_err(e.to_string()))?;
        Ok(PyDesign { inner: spec.build().py_err()? })
    }

    #[staticmethod]
    fn canonical(n: usize) -> PyResult<Self> {
        Ok(PyDesign { inner: design_lab::canonical_design(n).py_err()? })
    }

    /// `x_i = c + a / i^q`.
    #[staticmethod]
    fn convergent(n: usize, c: f64, a: f64, q: f64) -> PyResult<Self> {
        let rule = design_lab::SequenceRule::Power { c, a, q };
        Ok(PyDesign { inner: design_lab::convergent_design(n, &rule).py_err()? })
    }

    /// `alpha` is `sqrt`, `log`, `pow:S` or `table:a1,a2,...`.
    #[staticmethod]
    #[pyo3(signature = (n, alpha = "sqrt"))]
    fn prop1(n: usize, alpha: &str) -> PyResult<Self> {
        let rule = AlphaRule::parse(alpha).py_err()?;
        Ok(PyDesign { inner: design_lab::prop1_design(n, &rule).py_err()? })
    }

    #[staticmethod]
    fn prop2(n: usize, a: f64) -> PyResult<Self> {
        Ok(PyDesign { inner: design_lab::prop2_design(n, a).py_err()? })
    }

    #[staticmethod]
    #[pyo3(signature = (n, p, column_law = "normal", intercept = false, seed = 0))]
    fn iid(n: usize, p: usize, column_law: &str, intercept: bool, seed: u64) -> PyResult<Self> {
        let law = self::column_law(column_law)?;
        Ok(PyDesign { inner: design_lab::iid_random_design(n, p, law, intercept, seed).py_err()? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    /// Rows of the matrix.
    fn rows(&self) -> Vec<Vec<f64>> {
        let x = self.inner.matrix();
        (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
    }

    fn spec_json(&self) -> PyResult<String> {
        serde_json::to_string(self.inner.spec()).map_err(|e| DomainError::new_err(e.to_string()))
    }

    /// `{gram_over_n, noether_max, hat_trace}`.
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &design_lab::diagnostics(&self.inner).py_err()?)
    }
}

/// `xi_n = sqrt(n) alpha^T (beta_hat - beta)` for a design and an error law.
#[pyclass(name = "XiSpec", frozen, module = "momentrate")]
pub struct PyXiSpec {
    inner: XiSpec,
}

#[pymethods]
impl PyXiSpec {
    /// `law` is `normal`, `uniform`, `exp1`, `rademacher` or `bern(q)`.
    #[new]
    #[pyo3(signature = (design, alpha, law = "normal", sigma2 = 1.0))]
    fn new(design: &PyDesign, alpha: Vec<f64>, law: &str, sigma2: f64) -> PyResult<Self> {
        let law = ErrorLaw::parse(law, sigma2).py_err()?;
        Ok(PyXiSpec { inner: XiSpec::new(design.inner.clone(), alpha, law).py_err()? })
    }

    /// `b` with `xi_n = sum_i b_i eps_i`.
    fn weights(&self) -> PyResult<Vec<f64>> {
        ols::xi_weights(&self.inner).py_err()
    }

    fn exact_moment(&self, r: u32) -> PyResult<f64> {
        ols::xi_exact_moment(&self.inner, r).py_err()
    }

    /// `sigma^2 alpha^T V alpha`.
    fn limit_variance(&self) -> PyResult<f64> {
        self.inner.limit_variance().py_err()
    }

    /// Monte Carlo estimates `[{r, value, std_error, reps, seed}]`.
    fn mc_moments<'py>(&self, py: Python<'py>, orders: Vec<u32>, reps: u64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let est = py.detach(|| montecarlo::mc_xi_moments(&self.inner, &orders, reps, seed)).py_err()?;
        to_dict(py, &est)
    }
}

/// Exact delta table `{r, source, scaling_exponent, rows, identically_zero}`.
#[pyfunction]
fn delta_sequence<'py>(py: Python<'py>, r: u32, profile: &PyMomentProfile, ngrid: Vec<u64>) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &rate::delta_sequence_profile(r, &profile.inner, &ngrid).py_err()?)
}

/// Least-squares slope of `log|y|` on `log n`.
#[pyfunction]
fn loglog_slope<'py>(py: Python<'py>, ns: Vec<f64>, deltas: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    if ns.len() != deltas.len() {
        return Err(DomainError::new_err("ns and deltas differ in length"));
    }
    let points: Vec<(f64, f64)> = ns.into_iter().zip(deltas).collect();
    to_dict(py, &rate::fit_loglog(&points).py_err()?)
}

#[pyfunction]
#[pyo3(signature = (alpha, ngrid, sigma2 = 1.0, threshold = rate::DEFAULT_ESCAPE_FACTOR))]
fn prop1_divergence<'py>(py: Python<'py>, alpha: &str, ngrid: Vec<u64>, sigma2: f64, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
    let rule = AlphaRule::parse(alpha).py_err()?;
    to_dict(py, &rate::prop1_divergence_report(&rule, &ngrid, sigma2, threshold).py_err()?)
}

#[pyfunction]
#[pyo3(signature = (a, ngrid, mu3, threshold = rate::DEFAULT_ESCAPE_FACTOR))]
fn prop2_divergence<'py>(py: Python<'py>, a: f64, ngrid: Vec<u64>, mu3: f64, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &rate::prop2_divergence_report(a, &ngrid, mu3, threshold).py_err()?)
}

#[pymodule]
#[pyo3(name = "momentrate")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DomainError", m.py().get_type::<DomainError>())?;
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add_class::<ExactValue>()?;
    m.add_class::<PyMomentProfile>()?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PyXiSpec>()?;
    m.add_function(wrap_pyfunction!(partitions, m)?)?;
    m.add_function(wrap_pyfunction!(expansion_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(moment_s, m)?)?;
    m.add_function(wrap_pyfunction!(moment_z, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_moment, m)?)?;
    m.add_function(wrap_pyfunction!(limit_even, m)?)?;
    m.add_function(wrap_pyfunction!(limit_even_printed, m)?)?;
    m.add_function(wrap_pyfunction!(limit_odd, m)?)?;
    m.add_function(wrap_pyfunction!(delta_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(loglog_slope, m)?)?;
    m.add_function(wrap_pyfunction!(prop1_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(prop2_divergence, m)?)?;
    Ok(())
}
