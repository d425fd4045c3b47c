//! Python module `bnls`: grids, ground states, threshold classification and
//! time evolution for the radial biharmonic NLS.

use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use bnls_core::cli::{cmd_pairs, parse_family};
use bnls_core::diagnostics::{threshold_classify, Monitor, MonitorRecord, RECORD_COLUMNS};
use bnls_core::evolution::{evolve as core_evolve, EvolveConfig};
use bnls_core::grid::{Field, RadialGrid};
use bnls_core::groundstate::{pohozaev_report, sharp_gn_constant, solve_ground_state, GroundState};
use bnls_core::model::{ModelParams as CoreParams, Nonlinearity, Potential as CorePotential, PotentialTable};
use bnls_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::InvalidParameter(_) | Error::Parse(_) | Error::GridMismatch => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(frozen, name = "ModelParams")]
struct PyModelParams {
    inner: CoreParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (dim, p, lam = -1))]
    fn new(dim: usize, p: f64, lam: i32) -> PyResult<Self> {
        let sign = Nonlinearity::from_sign(lam).map_err(py_err)?;
        Ok(Self { inner: CoreParams::intercritical(dim, p, sign).map_err(py_err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn s_c(&self) -> f64 {
        self.inner.s_c()
    }

    #[getter]
    fn frequency(&self) -> f64 {
        self.inner.frequency()
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(dim={}, p={}, lam={})", self.inner.dim(), self.inner.p(), self.inner.lambda().sign())
    }
}

#[pyclass(frozen, name = "Potential")]
struct PyPotential {
    inner: CorePotential,
}

#[pymethods]
impl PyPotential {
    #[staticmethod]
    fn zero() -> Self {
        Self { inner: CorePotential::Zero }
    }

    /// `C (1 + r^2)^(-sigma)`.
    #[staticmethod]
    fn inverse_power(c: f64, sigma: f64) -> PyResult<Self> {
        Ok(Self { inner: CorePotential::inverse_power(c, sigma).map_err(py_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (r, v, dv = None))]
    fn tabulated(r: Vec<f64>, v: Vec<f64>, dv: Option<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: CorePotential::Tabulated(PotentialTable::new(r, v, dv).map_err(py_err)?) })
    }

    /// `(V(r), V'(r))`.
    fn __call__(&self, r: f64) -> PyResult<(f64, f64)> {
        self.inner.eval(r).map_err(py_err)
    }
}

#[pyclass(frozen, name = "RadialGrid")]
struct PyGrid {
    inner: Arc<RadialGrid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dim: usize, r_max: f64, n: usize) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(RadialGrid::new(dim, r_max, n).map_err(py_err)?) })
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn integrate(&self, f: Vec<f64>) -> PyResult<f64> {
        self.inner.integrate(&f).map_err(py_err)
    }
}

#[pyclass(frozen, name = "GroundState")]
struct PyGroundState {
    inner: GroundState,
}

#[pymethods]
impl PyGroundState {
    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q.real_parts()
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }

    #[getter]
    fn delta_q_sq(&self) -> f64 {
        self.inner.delta_q_sq
    }

    #[getter]
    fn e0(&self) -> f64 {
        self.inner.e0
    }

    #[getter]
    fn c_gn(&self) -> f64 {
        self.inner.c_gn
    }

    #[getter]
    fn thresh_energy(&self) -> f64 {
        self.inner.thresh_energy
    }

    #[getter]
    fn thresh_kinetic(&self) -> f64 {
        self.inner.thresh_kinetic
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual
    }

    /// Relative residuals of the three integral identities.
    fn pohozaev<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = pohozaev_report(&self.inner, &self.inner.params);
        let d = PyDict::new(py);
        d.set_item("kinetic", r.kinetic)?;
        d.set_item("mass", r.mass)?;
        d.set_item("energy", r.energy)?;
        Ok(d)
    }

    /// `|C_GN - 1/J_0(Q)| / (1/J_0(Q))`.
    fn gn_gap(&self) -> PyResult<f64> {
        Ok(sharp_gn_constant(&self.inner, &self.inner.params).map_err(py_err)?.relative_gap())
    }
}

#[pyfunction]
#[pyo3(signature = (params, grid, tol = 1e-10, max_iter = 500))]
fn ground_state(params: &PyModelParams, grid: &PyGrid, tol: f64, max_iter: usize) -> PyResult<PyGroundState> {
    Ok(PyGroundState { inner: solve_ground_state(&params.inner, &grid.inner, tol, max_iter).map_err(py_err)? })
}

fn field(grid: &PyGrid, values: Vec<Complex64>) -> PyResult<Field> {
    Field::new(grid.inner.clone(), values, 0.0).map_err(py_err)
}

/// Threshold verdict of a state: `{"class", "energy", "energy_ratio", "kinetic_ratio"}`.
#[pyfunction]
fn classify<'py>(
    py: Python<'py>,
    values: Vec<Complex64>,
    grid: &PyGrid,
    potential: &PyPotential,
    params: &PyModelParams,
    gs: &PyGroundState,
) -> PyResult<Bound<'py, PyDict>> {
    let u = field(grid, values)?;
    let v = threshold_classify(&u, &potential.inner, &params.inner, &gs.inner).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("class", v.class.as_str())?;
    d.set_item("energy", v.energy)?;
    d.set_item("energy_ratio", v.energy_ratio)?;
    d.set_item("kinetic_ratio", v.kinetic_ratio)?;
    Ok(d)
}

#[pyclass(frozen, name = "Trajectory")]
struct PyTrajectory {
    records: Vec<MonitorRecord>,
    final_state: Vec<Complex64>,
    #[pyo3(get)]
    termination: String,
    #[pyo3(get)]
    t_termination: f64,
    #[pyo3(get)]
    steps: usize,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn final_state(&self) -> Vec<Complex64> {
        self.final_state.clone()
    }

    /// Column names of `Trajectory.records`.
    #[staticmethod]
    fn columns() -> Vec<&'static str> {
        RECORD_COLUMNS.to_vec()
    }

    /// One row per record, in the order given by `columns()`.
    #[getter]
    fn records(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                vec![
                    r.t,
                    r.mass,
                    r.energy,
                    r.delta_u_sq,
                    r.h_half_sq,
                    r.lp1,
                    r.kinetic_product,
                    r.virial_mr,
                    r.virial_rhs,
                    r.tail_mass_frac,
                    r.dt_current,
                ]
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }
}

#[pyfunction]
#[pyo3(signature = (values, grid, potential, params, dt, t_end, record_every = 1, adaptive = true, virial_radius = None))]
#[allow(clippy::too_many_arguments)]
fn evolve(
    py: Python<'_>,
    values: Vec<Complex64>,
    grid: &PyGrid,
    potential: &PyPotential,
    params: &PyModelParams,
    dt: f64,
    t_end: f64,
    record_every: usize,
    adaptive: bool,
    virial_radius: Option<f64>,
) -> PyResult<PyTrajectory> {
    let u0 = field(grid, values)?;
    let mut cfg = EvolveConfig::new(dt, t_end).map_err(py_err)?;
    cfg.record_every = record_every;
    cfg.adaptive = adaptive;
    let (pot, pars) = (&potential.inner, &params.inner);
    let tr = py
        .detach(|| -> bnls_core::Result<_> {
            let mut monitor = Monitor::new(&grid.inner, pot, pars, virial_radius)?;
            core_evolve(&u0, pot, pars, &cfg, &mut monitor)
        })
        .map_err(py_err)?;
    Ok(PyTrajectory {
        termination: tr.termination.as_str().to_string(),
        t_termination: tr.t_termination(),
        steps: tr.steps,
        final_state: tr.final_state.values().to_vec(),
        records: tr.records,
    })
}

/// Admissible-pair arithmetic; same output as the `pairs` subcommand.
#[pyfunction]
#[pyo3(signature = (dim, family, q = None, r = None, s = None))]
fn pairs(dim: u32, family: &str, q: Option<&str>, r: Option<&str>, s: Option<&str>) -> PyResult<String> {
    let fam = parse_family(family, s).map_err(py_err)?;
    cmd_pairs(dim, fam, q, r).map_err(py_err)
}

#[pymodule]
pub fn bnls(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyPotential>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyGroundState>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(ground_state, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(pairs, m)?)?;
    Ok(())
}
