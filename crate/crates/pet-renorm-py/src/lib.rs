//! Python bindings. Exact scalars cross the boundary as strings such as
//! `"2/7"` or `"(2-1*sqrt(2))/2"`; structured results come back as dicts.

use pet_renorm::cocycle;
use pet_renorm::params::{self, Branch, Itinerary};
use pet_renorm::pet::{self as core_pet, Direction, LiftState};
use pet_renorm::symbolic;
use pet_renorm::tiling::{self, SeqWindow, SvgStyle, Viewport};
use pet_renorm::Error;
use pyo3::exceptions::{PyArithmeticError, PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::Domain(_) | Error::OutsideDomain(_) | Error::MixedSurd(..) => PyValueError::new_err(e.to_string()),
        Error::Window { .. } => PyIndexError::new_err(e.to_string()),
        Error::Boundary(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn scalar(s: &str) -> PyResult<pet_renorm::Scalar> {
    s.parse().map_err(to_py)
}

fn direction(s: &str) -> PyResult<Direction> {
    match s {
        "E" => Ok(Direction::East),
        "W" => Ok(Direction::West),
        "N" => Ok(Direction::North),
        "S" => Ok(Direction::South),
        _ => Err(PyValueError::new_err(format!("direction {s:?}: expected E, W, N or S"))),
    }
}

fn dir_name(d: Direction) -> &'static str {
    match d {
        Direction::East => "E",
        Direction::West => "W",
        Direction::North => "N",
        Direction::South => "S",
    }
}

/// serde value -> Python object through the json module
fn to_object<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Exact element of `Q` or `Q(√d)`.
#[pyclass(frozen, eq, ord, hash, from_py_object, module = "pet_renorm")]
#[derive(Clone, PartialEq, Eq, PartialOrd, Hash)]
struct Scalar(pet_renorm::Scalar);

#[pymethods]
impl Scalar {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        scalar(text).map(Scalar)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Scalar('{}')", self.0)
    }

    fn __float__(&self) -> f64 {
        self.0.to_f64()
    }

    fn __add__(&self, o: &Scalar) -> PyResult<Scalar> {
        self.0.try_add(&o.0).map(Scalar).map_err(to_py)
    }

    fn __sub__(&self, o: &Scalar) -> PyResult<Scalar> {
        self.0.try_sub(&o.0).map(Scalar).map_err(to_py)
    }

    fn __mul__(&self, o: &Scalar) -> PyResult<Scalar> {
        self.0.try_mul(&o.0).map(Scalar).map_err(to_py)
    }

    fn __truediv__(&self, o: &Scalar) -> PyResult<Scalar> {
        if o.0.is_zero() {
            return Err(pyo3::exceptions::PyZeroDivisionError::new_err("division by zero"));
        }
        self.0.try_div(&o.0).map(Scalar).map_err(to_py)
    }

    fn decimal(&self, digits: usize) -> String {
        self.0.to_decimal(digits)
    }

    #[getter]
    fn is_rational(&self) -> bool {
        self.0.is_rational()
    }
}

/// `f(t)` and the branch `(n, r)` it used.
#[pyfunction]
fn f_step(t: &str) -> PyResult<(String, (i64, i8))> {
    let (v, b) = params::f_step(&scalar(t)?).map_err(to_py)?;
    Ok((v.to_string(), (b.n, b.r)))
}

/// First `depth` branches of the f-orbit of `t`.
#[pyfunction]
fn itinerary(t: &str, depth: usize) -> PyResult<Vec<(i64, i8)>> {
    let it = params::itinerary_of(&scalar(t)?, depth).map_err(to_py)?;
    Ok(it.branches.iter().map(|b| (b.n, b.r)).collect())
}

/// Enclosure `(lo, hi)` of the parameters whose itinerary starts with `branches`.
#[pyfunction]
fn param_from_itinerary(branches: Vec<(i64, i8)>) -> PyResult<(String, String)> {
    let bs = branches.into_iter().map(|(n, r)| Branch::new(n, r)).collect::<Result<Vec<_>, _>>().map_err(to_py)?;
    let e = params::param_from_itinerary(&Itinerary::new(bs)).map_err(to_py)?;
    Ok((e.lo.to_string(), e.hi.to_string()))
}

/// Rows `{k, alpha_k, beta_k, d_k, nu}` with `nu = ν(O_{k+1})`.
#[pyfunction]
fn accumulate<'py>(py: Python<'py>, alpha: &str, beta: &str, depth: usize) -> PyResult<Bound<'py, PyAny>> {
    let run = py.detach(|| cocycle::accumulate(&scalar(alpha)?, &scalar(beta)?, depth).map_err(to_py))?;
    #[derive(Serialize)]
    struct Row<'a> {
        k: usize,
        alpha_k: &'a pet_renorm::Scalar,
        beta_k: &'a pet_renorm::Scalar,
        d_k: &'a pet_renorm::Scalar,
        nu: &'a pet_renorm::Scalar,
        nu_float: f64,
    }
    let rows: Vec<Row> = run
        .states
        .iter()
        .map(|s| Row { k: s.k, alpha_k: &s.alpha_k, beta_k: &s.beta_k, d_k: &s.d_k, nu: &s.nu, nu_float: s.nu.to_f64() })
        .collect();
    to_object(py, &rows)
}

/// One step of the lifted map: `(x, y, direction) -> (x', y', direction')`.
#[pyfunction]
fn psi_step(x: &str, y: &str, v: &str, alpha: &str, beta: &str) -> PyResult<(String, String, &'static str)> {
    let st = LiftState::new(scalar(x)?, scalar(y)?, direction(v)?).map_err(to_py)?;
    let n = core_pet::try_psi_lift_step(&st, &scalar(alpha)?, &scalar(beta)?).map_err(to_py)?;
    Ok((n.x.to_string(), n.y.to_string(), dir_name(n.v)))
}

/// Minimal period of the exact orbit, or `None` if it does not close within `max_steps`.
#[pyfunction]
fn detect_period(x: &str, y: &str, v: &str, alpha: &str, beta: &str, max_steps: u64) -> PyResult<Option<u64>> {
    let st = LiftState::new(scalar(x)?, scalar(y)?, direction(v)?).map_err(to_py)?;
    Ok(core_pet::detect_period(&st, &scalar(alpha)?, &scalar(beta)?, max_steps).map_err(to_py)?.period)
}

#[pyfunction]
#[pyo3(signature = (alpha, beta, samples=100, seed=0))]
fn verify_renormalization<'py>(py: Python<'py>, alpha: &str, beta: &str, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let (a, b) = (scalar(alpha)?, scalar(beta)?);
    let rep = py.detach(|| core_pet::verify_renormalization(&a, &b, samples, seed)).map_err(to_py)?;
    to_object(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (alpha, beta, samples=10_000, max_period=1_000, seed=0))]
fn periodic_measure_mc<'py>(
    py: Python<'py>,
    alpha: &str,
    beta: &str,
    samples: usize,
    max_period: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (a, b) = (scalar(alpha)?, scalar(beta)?);
    let rep = py.detach(|| core_pet::periodic_measure_mc(&a, &b, samples, max_period, seed)).map_err(to_py)?;
    to_object(py, &rep)
}

/// Truchet tiling `τ(m,n) = ω_m η_n`.
#[pyclass(module = "pet_renorm")]
struct Tiling(tiling::Tiling);

#[pymethods]
impl Tiling {
    /// Rotation-coded tiling: `ω_m = +1` iff `frac(x + mα) < ½`, likewise `η`.
    #[staticmethod]
    fn rotation(alpha: &str, x: &str, beta: &str, y: &str) -> PyResult<Tiling> {
        Ok(Tiling(tiling::Tiling::rotation(&scalar(alpha)?, &scalar(x)?, &scalar(beta)?, &scalar(y)?)))
    }

    /// Explicit sign lists starting at indices `m_lo` and `n_lo`.
    #[staticmethod]
    #[pyo3(signature = (omega, eta, m_lo=0, n_lo=0))]
    fn explicit(omega: Vec<i8>, eta: Vec<i8>, m_lo: i64, n_lo: i64) -> PyResult<Tiling> {
        let o = SeqWindow::explicit(m_lo, omega).map_err(to_py)?;
        let e = SeqWindow::explicit(n_lo, eta).map_err(to_py)?;
        Ok(Tiling(tiling::Tiling::new(o, e)))
    }

    fn tau(&self, m: i64, n: i64) -> PyResult<i8> {
        self.0.tau_at(m, n).map_err(to_py)
    }

    fn is_kept(&self, m: i64, n: i64) -> PyResult<bool> {
        self.0.is_kept_site(m, n).map_err(to_py)
    }

    /// One step of the curve-following map.
    fn follow(&self, m: i64, n: i64, v: &str) -> PyResult<((i64, i64), &'static str)> {
        let (site, w) = tiling::curve_follow(&self.0, (m, n), direction(v)?).map_err(to_py)?;
        Ok((site, dir_name(w)))
    }

    #[pyo3(signature = (m, n, v, max_steps=100_000))]
    fn curve_period(&self, m: i64, n: i64, v: &str, max_steps: u64) -> PyResult<Option<u64>> {
        tiling::curve_period(&self.0, (m, n), direction(v)?, max_steps).map_err(to_py)
    }

    /// `(site, direction, return_time, excision)` of the first return to the kept set.
    #[pyo3(signature = (m, n, v, cap=100_000))]
    fn return_to_kept(&self, m: i64, n: i64, v: &str, cap: u64) -> PyResult<((i64, i64), &'static str, u64, u64)> {
        let r = tiling::return_to_kept(&self.0, (m, n), direction(v)?, cap).map_err(to_py)?;
        Ok((r.site, dir_name(r.v), r.r, r.e))
    }

    /// Renormalized tiling on the given index ranges, as explicit sign lists.
    fn renormalize(&self, m_lo: i64, m_hi: i64, n_lo: i64, n_hi: i64) -> PyResult<Tiling> {
        tiling::renormalize_tiling(&self.0, (m_lo, m_hi), (n_lo, n_hi)).map(Tiling).map_err(to_py)
    }

    #[pyo3(signature = (m_lo=0, n_lo=0, width=30, height=15, tile_px=20))]
    fn render_svg(&self, m_lo: i64, n_lo: i64, width: u32, height: u32, tile_px: u32) -> PyResult<String> {
        let style = SvgStyle { tile_px, ..SvgStyle::default() };
        tiling::render_svg(&self.0, Viewport { m_lo, n_lo, width, height }, &style).map_err(to_py)
    }
}

/// Collapse an explicit sign list (indices from `lo`); returns `c(ω)` on `[-radius, radius]`.
#[pyfunction]
#[pyo3(signature = (signs, lo, radius=2))]
fn collapse(signs: Vec<i8>, lo: i64, radius: i64) -> PyResult<Vec<i8>> {
    let w = SeqWindow::explicit(lo, signs).map_err(to_py)?;
    symbolic::collapse(&w, -radius, radius).and_then(|c| c.values(-radius, radius)).map_err(to_py)
}

/// `(r₊, r₋)` of the rotation coding `ς_α(x)`, by brute force.
#[pyfunction]
fn rotation_return_times(alpha: &str, x: &str) -> PyResult<(u64, u64)> {
    symbolic::return_times(&symbolic::code_rotation(&scalar(alpha)?, &scalar(x)?)).map_err(to_py)
}

/// Closed form `(2⌊x/(1−2α)⌋+1, 2⌊(1−x)/(1−2α)⌋+1)` for `x ∈ [α, 1−α)`.
#[pyfunction]
fn rrt_closed_form(alpha: &str, x: &str) -> PyResult<(u64, u64)> {
    symbolic::rrt_closed_form(&scalar(alpha)?, &scalar(x)?).map_err(to_py)
}

#[pyfunction]
fn k_matrix(k: i64) -> Vec<Vec<i64>> {
    cocycle::k_matrix(k).to_i64_rows().expect("small entries")
}

/// `(holds, min_slack)` for the scaling inequality at `(γ, δ)`.
#[pyfunction]
fn scaling_check(gamma: &str, delta: &str) -> PyResult<(bool, String)> {
    let c = cocycle::scaling_check(&scalar(gamma)?, &scalar(delta)?).map_err(to_py)?;
    Ok((c.holds, c.min_slack.to_string()))
}

/// `(holds, min_slack)` of the block decay inequality.
#[pyfunction]
#[pyo3(signature = (k, k_prime, eps, grid=0))]
fn decay_inequality_check(k: usize, k_prime: usize, eps: &str, grid: usize) -> PyResult<(bool, String)> {
    if k == 0 || k_prime == 0 {
        return Err(PyValueError::new_err("block parameters must be positive"));
    }
    let c = cocycle::decay_inequality_check(k, k_prime, &scalar(eps)?, grid);
    Ok((c.holds, c.min_slack.to_string()))
}

/// Certificate dict with the understandable itinerary pair and the ν(NS) lower bound.
#[pyfunction]
#[pyo3(signature = (eta="1/2", stages=4, k_cap=65_536))]
fn construct_small_measure<'py>(py: Python<'py>, eta: &str, stages: usize, k_cap: usize) -> PyResult<Bound<'py, PyAny>> {
    let e = scalar(eta)?;
    let cert = py.detach(|| pet_renorm::cli::construct_small_measure(&e, stages, k_cap)).map_err(to_py)?;
    to_object(py, &cert)
}

#[pymodule(name = "pet_renorm")]
pub fn pet_renorm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Scalar>()?;
    m.add_class::<Tiling>()?;
    m.add_function(wrap_pyfunction!(f_step, m)?)?;
    m.add_function(wrap_pyfunction!(itinerary, m)?)?;
    m.add_function(wrap_pyfunction!(param_from_itinerary, m)?)?;
    m.add_function(wrap_pyfunction!(accumulate, m)?)?;
    m.add_function(wrap_pyfunction!(psi_step, m)?)?;
    m.add_function(wrap_pyfunction!(detect_period, m)?)?;
    m.add_function(wrap_pyfunction!(verify_renormalization, m)?)?;
    m.add_function(wrap_pyfunction!(periodic_measure_mc, m)?)?;
    m.add_function(wrap_pyfunction!(collapse, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_return_times, m)?)?;
    m.add_function(wrap_pyfunction!(rrt_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(k_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_check, m)?)?;
    m.add_function(wrap_pyfunction!(decay_inequality_check, m)?)?;
    m.add_function(wrap_pyfunction!(construct_small_measure, m)?)?;
    Ok(())
}
