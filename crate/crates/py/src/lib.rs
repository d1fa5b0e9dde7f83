//! Python bindings: grids, phase fields, the energy, the descent solver and
//! the main audits. Reports come back as plain dicts.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use fbac::energy;
use fbac::gamma::{self, ShapeSpec};
use fbac::geometry;
use fbac::grid::{self, FieldKind, Point};
use fbac::solver::{self, Boundary, SolverConfig};
use fbac::varifold;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn err(e: fbac::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

/// Python dict -> serde type, via the json module.
fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn point(c: &[f64]) -> PyResult<Point> {
    if c.is_empty() || c.len() > 3 {
        return Err(PyValueError::new_err("points have 1 to 3 coordinates"));
    }
    let mut p = [0.0; 3];
    p[..c.len()].copy_from_slice(c);
    Ok(p)
}

/// Tensor-product lattice on a box.
#[pyclass(name = "Grid", module = "fbac", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(grid::Grid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(extents: Vec<(f64, f64)>, nodes: Vec<usize>) -> PyResult<Self> {
        grid::Grid::new(&extents, &nodes).map(PyGrid).map_err(err)
    }

    /// `[lo, hi]^dim` with `nodes` nodes per axis.
    #[staticmethod]
    fn cube(dim: usize, lo: f64, hi: f64, nodes: usize) -> PyResult<Self> {
        grid::Grid::cube(dim, lo, hi, nodes).map(PyGrid).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn nodes(&self) -> Vec<usize> {
        self.0.node_counts().to_vec()
    }

    #[getter]
    fn spacings(&self) -> Vec<f64> {
        self.0.spacings().to_vec()
    }

    #[getter]
    fn min_spacing(&self) -> f64 {
        self.0.min_spacing()
    }

    #[getter]
    fn max_spacing(&self) -> f64 {
        self.0.max_spacing()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn coord(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.0.len() {
            return Err(PyValueError::new_err(format!("node {index} out of range")));
        }
        Ok(self.0.coord(index)[..self.0.dim()].to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Grid(nodes={:?}, spacings={:?})", self.0.node_counts(), self.0.spacings())
    }
}

/// Phase field with values in `[-1, 1]` on a grid.
#[pyclass(name = "Field", module = "fbac", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField(grid::Field);

#[pymethods]
impl PyField {
    /// Values in row-major node order (last axis fastest).
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        grid::Field::new(grid.0.clone(), FieldKind::Phase, values).map(PyField).map_err(err)
    }

    #[staticmethod]
    fn constant(grid: &PyGrid, value: f64) -> PyResult<Self> {
        PyField::new(grid, vec![value; grid.0.len()])
    }

    /// `clamp((x·normal − offset)/ε, −1, 1)`.
    #[staticmethod]
    fn exact_profile(grid: &PyGrid, epsilon: f64, normal: Vec<f64>, offset: f64) -> PyResult<Self> {
        solver::exact_profile(&grid.0, epsilon, &normal, offset).map(PyField).map_err(err)
    }

    /// Parallel sheets across the last axis at `offsets`.
    #[staticmethod]
    fn multi_sheet(grid: &PyGrid, epsilon: f64, offsets: Vec<f64>, signs: Vec<f64>) -> PyResult<Self> {
        solver::multi_sheet_profile(&grid.0, epsilon, &offsets, &signs).map(PyField).map_err(err)
    }

    /// Recovery field `clamp(−d/ε, −1, 1)` of a shape given as a dict, e.g.
    /// `{"type": "disc", "center": [0.5, 0.5], "radius": 0.25}`.
    #[staticmethod]
    fn recovery(grid: &PyGrid, epsilon: f64, shape: &Bound<'_, PyAny>) -> PyResult<Self> {
        let spec: ShapeSpec = from_py(shape)?;
        let s = spec.instantiate(&grid.0).map_err(err)?;
        gamma::recovery_sequence(&s, epsilon).map(PyField).map_err(err)
    }

    /// Read a field written by `save`.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        grid::read_binary(FieldKind::Phase, BufReader::new(f)).map(PyField).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let f = File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        grid::write_binary(&self.0, BufWriter::new(f)).map_err(err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }

    /// Coordinates of the nodes with `|u| < 1`.
    fn transition_band(&self) -> Vec<Vec<f64>> {
        let g = self.0.grid();
        geometry::transition_band(&self.0)
            .points(g)
            .iter()
            .map(|p| p[..g.dim()].to_vec())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Field(nodes={:?})", self.0.grid().node_counts())
    }
}

/// Energy report: dirichlet, potential, total, discrepancy_l1,
/// modica_violation, bv_lower_bound.
#[pyfunction]
#[pyo3(name = "energy")]
fn energy_report<'py>(py: Python<'py>, u: &PyField, epsilon: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &energy::energy(&u.0, epsilon).map_err(err)?)
}

#[pyfunction]
fn modica_check<'py>(py: Python<'py>, u: &PyField, epsilon: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &energy::modica_check(&u.0, epsilon).map_err(err)?)
}

#[pyfunction]
fn cs_lower_bound_check<'py>(py: Python<'py>, u: &PyField, epsilon: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &energy::cs_lower_bound_check(&u.0, epsilon).map_err(err)?)
}

/// Max over the bump basis of `|δJ_ε(u)[g]| / ‖g‖_{C¹}`.
#[pyfunction]
fn stationarity_residual(u: &PyField, epsilon: f64) -> PyResult<f64> {
    solver::stationarity_residual(&u.0, epsilon).map_err(err)
}

/// Projected descent from `init`. `boundary` is "natural", "flat"
/// (−1 below, +1 above along the last axis) or "hold_initial". Returns the
/// field and the trace as a dict.
#[pyfunction]
#[pyo3(signature = (init, epsilon, boundary = "natural", kappa_schedule = None, safety = None, max_iters = None, energy_tol = None))]
fn minimize<'py>(
    py: Python<'py>,
    init: &PyField,
    epsilon: f64,
    boundary: &str,
    kappa_schedule: Option<Vec<f64>>,
    safety: Option<f64>,
    max_iters: Option<usize>,
    energy_tol: Option<f64>,
) -> PyResult<(PyField, Bound<'py, PyAny>)> {
    let g = init.0.grid();
    let mut cfg = SolverConfig::new(epsilon);
    cfg.boundary = match boundary {
        "natural" => Boundary::Natural,
        "flat" => Boundary::flat(g),
        "hold_initial" => Boundary::HoldInitial,
        other => return Err(PyValueError::new_err(format!("unknown boundary {other:?}"))),
    };
    cfg.kappa_schedule = kappa_schedule;
    if let Some(s) = safety {
        cfg.safety = s;
    }
    if let Some(m) = max_iters {
        cfg.max_iters = m;
    }
    if let Some(t) = energy_tol {
        cfg.energy_tol = t;
    }
    let (u, trace) = py.detach(|| solver::minimize(&cfg, &init.0)).map_err(err)?;
    Ok((PyField(u), to_py(py, &trace)?))
}

/// Ball-mass ratios, density θ and sheet count at `center` over radii in
/// `window`.
#[pyfunction]
fn density_and_sheets<'py>(
    py: Python<'py>,
    u: &PyField,
    epsilon: f64,
    center: Vec<f64>,
    window: (f64, f64),
) -> PyResult<Bound<'py, PyAny>> {
    let s = varifold::density_and_sheets(&u.0, epsilon, &point(&center)?, window).map_err(err)?;
    to_py(py, &s)
}

/// Symmetric Hausdorff distance between two point lists.
#[pyfunction]
fn hausdorff(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    let dim = a.first().or(b.first()).map_or(1, Vec::len);
    if a.iter().chain(&b).any(|p| p.len() != dim) {
        return Err(PyValueError::new_err("points of mixed dimension"));
    }
    let pa = a.iter().map(|p| point(p)).collect::<PyResult<Vec<_>>>()?;
    let pb = b.iter().map(|p| point(p)).collect::<PyResult<Vec<_>>>()?;
    geometry::hausdorff(&pa, &pb, dim).map_err(err)
}

#[pymodule]
#[pyo3(name = "fbac")]
fn fbac_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(energy_report, m)?)?;
    m.add_function(wrap_pyfunction!(modica_check, m)?)?;
    m.add_function(wrap_pyfunction!(cs_lower_bound_check, m)?)?;
    m.add_function(wrap_pyfunction!(stationarity_residual, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    m.add_function(wrap_pyfunction!(density_and_sheets, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    Ok(())
}
