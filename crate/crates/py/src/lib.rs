//! Python bindings: the main types and operations of the toolkit, exposed
//! in-process so notebooks can drive simulations and the dimension machinery
//! without shelling out to the CLI.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pamfract::hausdorff::{
    self, dimension_estimate, mu_n as mu_n_rs, nu_content as nu_content_rs, Strategy,
};
use pamfract::kpz;
use pamfract::level_sets::{self, RegionSet, SetMeta, SpaceTimeSet};
use pamfract::noise::NoiseStream;
use pamfract::sim;
use pamfract::{Boundary, GridSpec, InitialData, Scheme};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Deterministic counter-addressed Gaussian noise stream.
#[pyclass(name = "NoiseStream")]
#[derive(Clone)]
struct PyNoiseStream {
    inner: NoiseStream,
}

#[pymethods]
impl PyNoiseStream {
    #[new]
    fn new(master_seed: u64, stream_id: u64) -> Self {
        PyNoiseStream {
            inner: NoiseStream::new(master_seed, stream_id),
        }
    }

    fn gaussian(&self, n: u64, i: u64) -> f64 {
        self.inner.gaussian(n, i)
    }

    fn plane(&self, n: u64, i_lo: u64, i_hi: u64) -> PyResult<Vec<f64>> {
        if i_hi <= i_lo {
            return Err(value_err("need i_hi > i_lo"));
        }
        Ok(self.inner.plane(n, i_lo..i_hi))
    }
}

/// Lattice description shared by solver calls.
#[pyclass(name = "Grid")]
#[derive(Clone)]
struct PyGrid {
    inner: Arc<GridSpec>,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (dx, dt, x_min, x_max, t_end, snapshot_times, boundary="periodic", scheme="splitting"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dx: f64,
        dt: f64,
        x_min: f64,
        x_max: f64,
        t_end: f64,
        snapshot_times: Vec<f64>,
        boundary: &str,
        scheme: &str,
    ) -> PyResult<Self> {
        let boundary = match boundary {
            "periodic" => Boundary::Periodic,
            "absorbing" => Boundary::Absorbing,
            other => return Err(value_err(format!("unknown boundary '{other}'"))),
        };
        let scheme = match scheme {
            "splitting" => Scheme::Splitting,
            "explicit_euler" => Scheme::ExplicitEuler,
            other => return Err(value_err(format!("unknown scheme '{other}'"))),
        };
        let grid = GridSpec {
            dx,
            dt,
            x_min,
            x_max,
            boundary,
            scheme,
            t_end,
            snapshot_times,
        };
        grid.validate().map_err(value_err)?;
        Ok(PyGrid {
            inner: Arc::new(grid),
        })
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    fn xs(&self) -> Vec<f64> {
        (0..self.inner.n_sites())
            .map(|i| self.inner.site_x(i))
            .collect()
    }
}

fn parse_init(kind: &str, value: f64, values: Option<Vec<f64>>) -> PyResult<InitialData> {
    match kind {
        "flat" => Ok(InitialData::Flat { c: value }),
        "dirac" => Ok(InitialData::Dirac { x0: value }),
        "sampled" => Ok(InitialData::Sampled {
            values: values.ok_or_else(|| value_err("sampled init needs values"))?,
        }),
        other => Err(value_err(format!("unknown initial data kind '{other}'"))),
    }
}

/// One simulated trajectory with its snapshots.
#[pyclass(name = "Trajectory")]
struct PyTrajectory {
    inner: sim::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.snapshots.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn diverged(&self) -> bool {
        self.inner.diverged
    }

    #[getter]
    fn stream_id(&self) -> u64 {
        self.inner.stream_id
    }

    fn values(&self, t: f64) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .snapshot_at(t)
            .ok_or_else(|| value_err(format!("no snapshot at t = {t}")))?
            .values
            .clone())
    }

    /// Height field log u at snapshot time `t`.
    fn heights(&self, t: f64) -> PyResult<Vec<f64>> {
        let snap = self
            .inner
            .snapshot_at(t)
            .ok_or_else(|| value_err(format!("no snapshot at t = {t}")))?;
        Ok(kpz::cole_hopf(snap).map_err(runtime_err)?.values)
    }

    /// Rescaled narrow-wedge field at snapshot time `t` on the given
    /// rescaled coordinates.
    fn upsilon(&self, t: f64, xt: Vec<f64>) -> PyResult<Vec<f64>> {
        let snap = self
            .inner
            .snapshot_at(t)
            .ok_or_else(|| value_err(format!("no snapshot at t = {t}")))?;
        let h = kpz::cole_hopf(snap).map_err(runtime_err)?;
        Ok(kpz::upsilon(&h, &xt).map_err(value_err)?.values)
    }

    /// `(sup, argsup)` of `Upsilon + nu x^2 / 2` over `[-window, window]`.
    fn sup_parabola(&self, t: f64, nu: f64, window: f64) -> PyResult<(f64, f64)> {
        let snap = self
            .inner
            .snapshot_at(t)
            .ok_or_else(|| value_err(format!("no snapshot at t = {t}")))?;
        let h = kpz::cole_hopf(snap).map_err(runtime_err)?;
        let scale = t.powf(2.0 / 3.0);
        let xt: Vec<f64> = (0..self.inner.grid.n_sites())
            .map(|i| self.inner.grid.site_x(i) / scale)
            .collect();
        let ups = kpz::upsilon(&h, &xt).map_err(value_err)?;
        kpz::sup_parabola(&ups, nu, window).map_err(value_err)
    }

    /// Valley set pixels `(floor t, floor x)` for the given length scale.
    fn valley_pixels(&self, gamma: f64) -> Vec<(i64, i64)> {
        let set = level_sets::pixelate(&level_sets::valley_set(&self.inner, gamma));
        set.pixels()
            .expect("pixelated")
            .iter()
            .map(|p| (p[0], p[1]))
            .collect()
    }

    fn checkpoint(&self) -> Vec<u8> {
        pamfract::snapshot::checkpoint(&self.inner)
    }
}

#[pyfunction]
#[pyo3(signature = (grid, init_kind, init_value, master_seed, stream_id, noise=true, init_values=None))]
fn solve(
    grid: &PyGrid,
    init_kind: &str,
    init_value: f64,
    master_seed: u64,
    stream_id: u64,
    noise: bool,
    init_values: Option<Vec<f64>>,
) -> PyResult<PyTrajectory> {
    let init = parse_init(init_kind, init_value, init_values)?;
    let drive = noise.then(|| sim::NoiseDrive::full(NoiseStream::new(master_seed, stream_id)));
    let traj = sim::solve(&grid.inner, &init, drive.as_ref()).map_err(value_err)?;
    Ok(PyTrajectory { inner: traj })
}

#[pyfunction]
#[pyo3(signature = (grid, init_kind, init_value, master_seed, stream_id, center, half_width))]
fn localized_solve(
    grid: &PyGrid,
    init_kind: &str,
    init_value: f64,
    master_seed: u64,
    stream_id: u64,
    center: f64,
    half_width: f64,
) -> PyResult<PyTrajectory> {
    let init = parse_init(init_kind, init_value, None)?;
    let stream = NoiseStream::new(master_seed, stream_id);
    let traj = sim::localized_solve(&grid.inner, &init, stream, center, half_width)
        .map_err(value_err)?;
    Ok(PyTrajectory { inner: traj })
}

#[pyfunction]
fn restore_trajectory(bytes: Vec<u8>) -> PyResult<PyTrajectory> {
    Ok(PyTrajectory {
        inner: pamfract::snapshot::restore(&bytes).map_err(value_err)?,
    })
}

/// The stretch map `(t, x) -> (e^{t/beta}, x)` on a point list.
#[pyfunction]
fn stretch(points: Vec<(f64, f64)>, beta: f64) -> PyResult<Vec<(f64, f64)>> {
    if !(beta > 0.0) {
        return Err(value_err("beta > 0 required"));
    }
    let set = SpaceTimeSet::from_points(
        points.into_iter().map(|p| [p.0, p.1]).collect(),
        SetMeta::default(),
    );
    Ok(level_sets::stretch(&set, beta)
        .points_f64()
        .into_iter()
        .map(|p| (p[0], p[1]))
        .collect())
}

#[pyfunction]
fn pixelate(points: Vec<(f64, f64)>) -> Vec<(i64, i64)> {
    let set = SpaceTimeSet::from_points(
        points.into_iter().map(|p| [p.0, p.1]).collect(),
        SetMeta::default(),
    );
    level_sets::pixelate(&set)
        .pixels()
        .expect("pixelated")
        .iter()
        .map(|p| (p[0], p[1]))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (q, n_max, budget=None))]
fn xi_q(q: f64, n_max: u32, budget: Option<u64>) -> PyResult<Vec<(i64, i64)>> {
    let set = level_sets::xi_q(q, n_max, budget).map_err(value_err)?;
    Ok(set
        .pixels()
        .expect("pixel set")
        .iter()
        .map(|p| (p[0], p[1]))
        .collect())
}

fn parse_strategy(name: &str) -> PyResult<Strategy> {
    match name {
        "exact_small" => Ok(Strategy::ExactSmall),
        "single_scale" => Ok(Strategy::SingleScale),
        "greedy_multiscale" => Ok(Strategy::GreedyMultiscale),
        other => Err(value_err(format!("unknown strategy '{other}'"))),
    }
}

fn pixel_set(pixels: Vec<(i64, i64)>) -> SpaceTimeSet {
    SpaceTimeSet::from_pixels(
        pixels.into_iter().map(|p| [p.0, p.1]).collect(),
        SetMeta::default(),
    )
}

/// Macroscopic Hausdorff content of a pixel set in shell `n`.
#[pyfunction]
#[pyo3(signature = (pixels, n, rho, strategy="single_scale"))]
fn nu_content(pixels: Vec<(i64, i64)>, n: u32, rho: f64, strategy: &str) -> PyResult<f64> {
    nu_content_rs(&pixel_set(pixels), n, rho, parse_strategy(strategy)?).map_err(value_err)
}

#[pyfunction]
fn mu_n(pixels: Vec<(i64, i64)>, n: u32, gamma: f64) -> PyResult<u64> {
    mu_n_rs(&pixel_set(pixels), n, gamma).map_err(value_err)
}

#[pyfunction]
fn density_lower_bound(pixels: Vec<(i64, i64)>, n: u32, gamma: f64) -> PyResult<f64> {
    hausdorff::density_lower_bound(&pixel_set(pixels), n, gamma).map_err(value_err)
}

fn estimate_to_py(py: Python<'_>, est: hausdorff::DimensionEstimate) -> PyResult<PyObject> {
    let json = serde_json::to_value(&est).map_err(runtime_err)?;
    json_to_py(py, &json)
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<PyObject> {
    Ok(match v {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_py(py),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py(py)
            }
        }
        serde_json::Value::String(s) => s.into_py(py),
        serde_json::Value::Array(items) => {
            let list = pyo3::types::PyList::empty_bound(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py(py)
        }
        serde_json::Value::Object(map) => {
            let dict = pyo3::types::PyDict::new_bound(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_py(py)
        }
    })
}

/// Dimension estimate for a materialized pixel set; returns a dict with
/// `rho_star` and per-rho slope diagnostics.
#[pyfunction]
#[pyo3(signature = (pixels, n_min, n_max, strategy="single_scale", rho_step=0.05))]
fn dimension_of_pixels(
    py: Python<'_>,
    pixels: Vec<(i64, i64)>,
    n_min: u32,
    n_max: u32,
    strategy: &str,
    rho_step: f64,
) -> PyResult<PyObject> {
    let steps = (2.0 / rho_step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * 2.0 / steps as f64).collect();
    let est = dimension_estimate(
        &pixel_set(pixels),
        &grid,
        n_min..=n_max,
        parse_strategy(strategy)?,
    )
    .map_err(value_err)?;
    estimate_to_py(py, est)
}

/// Dimension estimate for a built-in synthetic region:
/// `kind` in {"xi", "quadrant", "hline"}.
#[pyfunction]
#[pyo3(signature = (kind, n_min, n_max, q=2.0, strategy="single_scale", rho_step=0.05))]
fn dimension_of_region(
    py: Python<'_>,
    kind: &str,
    n_min: u32,
    n_max: u32,
    q: f64,
    strategy: &str,
    rho_step: f64,
) -> PyResult<PyObject> {
    let region = match kind {
        "xi" => RegionSet::XiQ { q },
        "quadrant" => RegionSet::Quadrant,
        "hline" => RegionSet::HorizontalLine,
        other => return Err(value_err(format!("unknown region '{other}'"))),
    };
    let steps = (2.0 / rho_step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * 2.0 / steps as f64).collect();
    let est = dimension_estimate(&region, &grid, n_min..=n_max, parse_strategy(strategy)?)
        .map_err(value_err)?;
    estimate_to_py(py, est)
}

#[pymodule]
fn pamfract_py(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNoiseStream>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(localized_solve, m)?)?;
    m.add_function(wrap_pyfunction!(restore_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(stretch, m)?)?;
    m.add_function(wrap_pyfunction!(pixelate, m)?)?;
    m.add_function(wrap_pyfunction!(xi_q, m)?)?;
    m.add_function(wrap_pyfunction!(nu_content, m)?)?;
    m.add_function(wrap_pyfunction!(mu_n, m)?)?;
    m.add_function(wrap_pyfunction!(density_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(dimension_of_pixels, m)?)?;
    m.add_function(wrap_pyfunction!(dimension_of_region, m)?)?;
    Ok(())
}
