//! Python bindings: configs in, plain dicts and lists out.

use footstep_core::sim::{push_sweep as core_push_sweep, run_episode as core_run_episode};
use footstep_core::swing::{plan_swing as core_plan_swing, FootState, SwingTrajectory, Vec3};
use footstep_core::terrain::{fit_plane, query_footprint_height};
use footstep_core::{
    al_solve, propagate as core_propagate, ref_solve, Foothold, LipParams, LipState, Multipliers,
    ScenarioConfig, SupportSide, Vec2, WarmStart,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

type P2 = (f64, f64);
type P3 = (f64, f64, f64);

fn err(e: footstep_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn v2(p: P2) -> Vec2 {
    Vec2::new(p.0, p.1)
}

fn t2(v: &Vec2) -> P2 {
    (v.x, v.y)
}

fn t3(v: &Vec3) -> P3 {
    (v.x, v.y, v.z)
}

/// CoM state after `dt` seconds over a fixed foot: returns `(pos, vel)`.
#[pyfunction]
#[pyo3(signature = (pos, vel, foot, dt, gravity = 9.81, com_height = 0.81))]
fn propagate(pos: P2, vel: P2, foot: P2, dt: f64, gravity: f64, com_height: f64) -> PyResult<(P2, P2)> {
    let params = LipParams::new(gravity, com_height).map_err(err)?;
    let s = core_propagate(&LipState::new(v2(pos), v2(vel)), &Foothold::new(foot.0, foot.1), dt, &params).map_err(err)?;
    Ok((t2(&s.pos), t2(&s.vel)))
}

/// Scenario configuration: TOML text plus `key=value` overrides.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct Config {
    inner: ScenarioConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (text = "", overrides = Vec::new()))]
    fn new(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        let inner = ScenarioConfig::parse_with_overrides(text, &overrides).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, overrides = Vec::new()))]
    fn load(path: std::path::PathBuf, overrides: Vec<String>) -> PyResult<Self> {
        let inner = ScenarioConfig::load(&path, &overrides).map_err(err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.to_kv_string()
    }

    fn __repr__(&self) -> String {
        format!("Config(mode={}, seed={})", self.inner.mode, self.inner.seed)
    }
}

/// Solves the configured footstep problem once from the nominal plan with
/// `solver` = "al" or "reference".
#[pyfunction]
#[pyo3(signature = (config, solver = "al"))]
fn solve<'py>(py: Python<'py>, config: &Config, solver: &str) -> PyResult<Bound<'py, PyDict>> {
    let spec = config.inner.problem_spec().map_err(err)?;
    let planner = config.inner.planner_config(false);
    let init = spec.nominal_plan(planner.nominal_step_time);
    let res = match solver {
        "al" => al_solve(&spec, &init, &Multipliers::zeros(spec.horizon, planner.al.mu0), &planner.al),
        "reference" => ref_solve(&spec, &WarmStart::new(init, spec.current_support, 0.0, 0), &planner.reference),
        other => return Err(PyValueError::new_err(format!("unknown solver {other:?}"))),
    }
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("footholds", res.plan.footholds.iter().map(|f| t2(&f.xy)).collect::<Vec<_>>())?;
    d.set_item("durations", res.plan.durations.clone())?;
    d.set_item("cost", res.cost)?;
    d.set_item("feasible", res.feasible)?;
    d.set_item("converged", res.converged)?;
    d.set_item("iterations", res.iterations)?;
    d.set_item("max_violation", res.max_violation)?;
    Ok(d)
}

/// Runs one closed-loop episode, with the configured push when `push` is
/// true. Returns a summary dict with per-step records and per-tick columns.
#[pyfunction]
#[pyo3(signature = (config, push = false))]
fn run_episode<'py>(py: Python<'py>, config: &Config, push: bool) -> PyResult<Bound<'py, PyDict>> {
    let cfg = &config.inner;
    let spec = cfg.problem_spec().map_err(err)?;
    let mut scenario = cfg.scenario(false).map_err(err)?;
    scenario.push = push.then(|| cfg.push_event());
    let res = py.detach(|| core_run_episode(&spec, &scenario, cfg.seed)).map_err(err)?;

    let d = PyDict::new(py);
    d.set_item("success", res.success)?;
    d.set_item("steps_to_recover", res.steps_to_recover)?;
    d.set_item("failure", res.failure.clone())?;
    d.set_item("sim_time", res.sim_time)?;
    let steps = PyList::empty(py);
    for s in &res.steps {
        let row = PyDict::new(py);
        row.set_item("start_time", s.start_time)?;
        row.set_item("duration", s.duration)?;
        row.set_item("side", if s.side == SupportSide::Left { "left" } else { "right" })?;
        row.set_item("foothold", (s.foothold.xy.x, s.foothold.xy.y, s.foothold.z))?;
        row.set_item("stride_velocity", t2(&s.stride_velocity))?;
        row.set_item("after_push", s.after_push)?;
        steps.append(row)?;
    }
    d.set_item("steps", steps)?;
    let log = PyDict::new(py);
    let col = |f: &dyn Fn(&footstep_core::sim::TickRecord) -> f64| res.log.iter().map(f).collect::<Vec<f64>>();
    log.set_item("time", col(&|r| r.time))?;
    log.set_item("x", col(&|r| r.state.pos.x))?;
    log.set_item("y", col(&|r| r.state.pos.y))?;
    log.set_item("vx", col(&|r| r.state.vel.x))?;
    log.set_item("vy", col(&|r| r.state.vel.y))?;
    log.set_item("z", col(&|r| r.com_z))?;
    log.set_item("support_x", col(&|r| r.support.xy.x))?;
    log.set_item("support_y", col(&|r| r.support.xy.y))?;
    log.set_item("dt0", col(&|r| r.durations.first().copied().unwrap_or(f64::NAN)))?;
    d.set_item("log", log)?;
    Ok(d)
}

/// Maximum recoverable push per mode and direction, as a list of
/// `(mode, direction_deg, max_force)`.
#[pyfunction]
fn push_sweep(py: Python<'_>, config: &Config) -> PyResult<Vec<(String, f64, f64)>> {
    let cfg = &config.inner;
    let spec = cfg.problem_spec().map_err(err)?;
    let mut base = cfg.scenario(false).map_err(err)?;
    base.push = Some(cfg.push_event());
    let sweep = cfg.sweep_config();
    let rows = py.detach(|| core_push_sweep(&spec, &base, &sweep));
    Ok(rows
        .into_iter()
        .map(|r| (r.mode.name().to_string(), r.direction_deg, r.max_force))
        .collect())
}

/// Swing foot trajectory with a rest apex.
#[pyclass(name = "Swing", frozen)]
struct Swing {
    inner: SwingTrajectory,
}

#[pymethods]
impl Swing {
    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    #[getter]
    fn apex_time(&self) -> Option<f64> {
        self.inner.apex_time
    }

    /// `(pos, vel, acc)` at time `t`.
    fn eval(&self, t: f64) -> (P3, P3, P3) {
        let s = self.inner.eval(t);
        (t3(&s.pos), t3(&s.vel), t3(&s.acc))
    }
}

#[pyfunction]
#[pyo3(signature = (start, goal, duration, apex_height, start_vel = (0.0, 0.0, 0.0)))]
fn plan_swing(start: P3, goal: P3, duration: f64, apex_height: f64, start_vel: P3) -> PyResult<Swing> {
    let st = FootState {
        vel: Vec3::new(start_vel.0, start_vel.1, start_vel.2),
        ..FootState::at_rest(Vec3::new(start.0, start.1, start.2))
    };
    let inner = core_plan_swing(&st, &Vec3::new(goal.0, goal.1, goal.2), duration, apex_height).map_err(err)?;
    Ok(Swing { inner })
}

/// Grid of terrain heights; `heights[row][col]` sits at
/// `origin + (col, row) * resolution`. NaN marks missing cells.
#[pyclass(name = "HeightMap", frozen)]
struct PyHeightMap {
    inner: footstep_core::HeightMap,
}

#[pymethods]
impl PyHeightMap {
    #[new]
    fn new(origin: P2, resolution: f64, heights: Vec<Vec<f64>>) -> PyResult<Self> {
        let rows = heights.len();
        let cols = heights.first().map_or(0, Vec::len);
        if heights.iter().any(|r| r.len() != cols) {
            return Err(PyValueError::new_err("ragged height rows"));
        }
        let flat = heights.into_iter().flatten().collect();
        let inner = footstep_core::HeightMap::new(v2(origin), resolution, rows, cols, flat).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let inner = footstep_core::HeightMap::load(&path).map_err(err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows(), self.inner.cols())
    }

    #[pyo3(signature = (x, y, footprint = 0.09))]
    fn footprint_height(&self, x: f64, y: f64, footprint: f64) -> PyResult<f64> {
        query_footprint_height(&self.inner, &Vec2::new(x, y), footprint).map_err(err)
    }

    /// Plane through the support and planned footholds:
    /// `(alpha, beta, offset, slope_deg)` with `z = alpha x + beta y + offset`.
    #[pyo3(signature = (support, planned, footprint = 0.09))]
    fn fit_plane(&self, support: P2, planned: Vec<P2>, footprint: f64) -> PyResult<(f64, f64, f64, f64)> {
        let planned: Vec<Foothold> = planned.into_iter().map(|p| Foothold::new(p.0, p.1)).collect();
        let p = fit_plane(&self.inner, &Foothold::new(support.0, support.1), &planned, footprint).map_err(err)?;
        Ok((p.alpha, p.beta, p.offset, p.slope_deg()))
    }
}

#[pymodule]
fn footstep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(push_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(plan_swing, m)?)?;
    m.add_class::<Config>()?;
    m.add_class::<Swing>()?;
    m.add_class::<PyHeightMap>()?;
    Ok(())
}
