//! Flat `key = value` configuration files (TOML syntax, SI units).
//!
//! Every key is optional; missing keys take the defaults below. Unknown
//! keys are rejected.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `horizon` | 2 | future footholds N |
//! | `gravity` | 9.81 | m/s² |
//! | `com_height` | 0.81 | pendulum height (m) |
//! | `l_max` | 0.5 | max CoM-to-foot distance (m) |
//! | `v_max` | 1.0 | max CoM speed at step boundaries (m/s) |
//! | `r_foot` | 0.1 | min lateral foot separation (m) |
//! | `t_lower`, `t_upper` | 0.2, 0.8 | step duration bounds (s) |
//! | `w_x`, `w_y` | 1, 1 | velocity tracking weights |
//! | `ref_vx`, `ref_vy` | 0, 0 | reference velocity (m/s) |
//! | `com_x`, `com_y`, `com_vx`, `com_vy` | 0 | initial CoM state |
//! | `support_x`, `support_y` | 0, 0.05 | initial support foot (m) |
//! | `support_side` | `"left"` | initial support side |
//! | `step_elapsed` | 0 | time already spent on the support (s) |
//! | `mode` | `"arto-al"` | planner mode |
//! | `fast_rate`, `reference_rate` | 200, 20 | loop rates (Hz) |
//! | `nominal_step_time` | 0.4 | frozen / initial step time (s) |
//! | `al_alpha`, `al_phi`, `al_mu0`, `al_mu_max` | 0.005, 1.5, 1, 1e4 | AL solver |
//! | `al_grad_tol`, `al_max_iters`, `al_inner_per_outer`, `al_constraint_tol` | 0.05, 100, 10, 1e-3 | AL solver |
//! | `ref_max_iters`, `ref_initial_barrier` | 150, 0.01 | reference solver |
//! | `duration` | 6 | episode length, or time after the push (s) |
//! | `sim_rate` | 1000 | Hz |
//! | `total_mass` | 14 | kg |
//! | `recovery_steps`, `velocity_tol` | 6, 0.05 | stable-walk criterion |
//! | `not_ready_grace` | 0.05 | s |
//! | `init_pos_noise`, `init_vel_noise` | 0, 0 | initial-state ball radii |
//! | `push_force`, `push_direction`, `push_duration` | 30, 270, 0.1 | N, deg (0 forward, 90 left), s |
//! | `push_left_touchdown` | 3 | push at this left touchdown |
//! | `compare_modes` | `["no-time-adp"]` | extra modes run by `push` |
//! | `terrain_file` | none | HMAP height map |
//! | `ramp_deg` | none | generated ramp when no file is given |
//! | `terrain_aware` | true | use the map for planning |
//! | `footprint` | 0.09 | footprint half-width (m) |
//! | `apex_clearance` | 0.05 | swing apex clearance (m) |
//! | `sweep` | `"push"` | `"push"` or `"success"` |
//! | `sweep_modes` | all four | |
//! | `sweep_directions` | 0, 45, …, 315 | deg |
//! | `sweep_resolution`, `sweep_ceiling`, `sweep_max_ceiling` | 5, 160, 1280 | N |
//! | `terrain_family` | `"slope"` | `"slope"` or `"steps"` |
//! | `terrain_params` | 0, 2.5, 5, 7.5, 10 | deg or m |
//! | `trials` | 10 | episodes per success-rate point |
//! | `sweep_blind` | true | add terrain-blind conditions |
//! | `seed` | 0 | |

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::al::AlConfig;
use crate::error::{Error, Result};
use crate::lip::{Foothold, LipParams, LipState, Vec2};
use crate::planner::{PlannerConfig, PlannerMode};
use crate::problem::{ConstraintLimits, CostWeights, ProblemSpec, SupportSide};
use crate::reference::RefConfig;
use crate::sim::{Condition, PushEvent, Scenario, SweepConfig, TerrainFamily};
use crate::swing::DEFAULT_APEX_CLEARANCE;
use crate::terrain::{HeightMap, DEFAULT_FOOTPRINT};

/// Keys that describe a [`ProblemSpec`].
pub const PROBLEM_KEYS: [&str; 20] = [
    "horizon",
    "gravity",
    "com_height",
    "l_max",
    "v_max",
    "r_foot",
    "t_lower",
    "t_upper",
    "w_x",
    "w_y",
    "ref_vx",
    "ref_vy",
    "com_x",
    "com_y",
    "com_vx",
    "com_vy",
    "support_x",
    "support_y",
    "support_side",
    "step_elapsed",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon: usize,
    pub gravity: f64,
    pub com_height: f64,
    pub l_max: f64,
    pub v_max: f64,
    pub r_foot: f64,
    pub t_lower: f64,
    pub t_upper: f64,
    pub w_x: f64,
    pub w_y: f64,
    pub ref_vx: f64,
    pub ref_vy: f64,
    pub com_x: f64,
    pub com_y: f64,
    pub com_vx: f64,
    pub com_vy: f64,
    pub support_x: f64,
    pub support_y: f64,
    pub support_side: SupportSide,
    pub step_elapsed: f64,

    pub mode: PlannerMode,
    pub fast_rate: f64,
    pub reference_rate: f64,
    pub nominal_step_time: f64,
    pub al_alpha: f64,
    pub al_phi: f64,
    pub al_mu0: f64,
    pub al_mu_max: f64,
    pub al_grad_tol: f64,
    pub al_max_iters: usize,
    pub al_inner_per_outer: usize,
    pub al_constraint_tol: f64,
    pub ref_max_iters: usize,
    pub ref_initial_barrier: f64,

    pub duration: f64,
    pub sim_rate: f64,
    pub total_mass: f64,
    pub recovery_steps: usize,
    pub velocity_tol: f64,
    pub not_ready_grace: f64,
    pub init_pos_noise: f64,
    pub init_vel_noise: f64,
    pub push_force: f64,
    pub push_direction: f64,
    pub push_duration: f64,
    pub push_left_touchdown: u32,
    pub compare_modes: Vec<PlannerMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terrain_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramp_deg: Option<f64>,
    pub terrain_aware: bool,
    pub footprint: f64,
    pub apex_clearance: f64,

    pub sweep: SweepKind,
    pub sweep_modes: Vec<PlannerMode>,
    pub sweep_directions: Vec<f64>,
    pub sweep_resolution: f64,
    pub sweep_ceiling: f64,
    pub sweep_max_ceiling: f64,
    pub terrain_family: TerrainFamily,
    pub terrain_params: Vec<f64>,
    pub trials: usize,
    pub sweep_blind: bool,

    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Push,
    Success,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let spec = ProblemSpec::default();
        let planner = PlannerConfig::default();
        let scenario = Scenario::default();
        let sweep = SweepConfig::default();
        let push = PushEvent::default();
        let mut cfg = Self {
            horizon: 0,
            gravity: 0.0,
            com_height: 0.0,
            l_max: 0.0,
            v_max: 0.0,
            r_foot: 0.0,
            t_lower: 0.0,
            t_upper: 0.0,
            w_x: 0.0,
            w_y: 0.0,
            ref_vx: 0.0,
            ref_vy: 0.0,
            com_x: 0.0,
            com_y: 0.0,
            com_vx: 0.0,
            com_vy: 0.0,
            support_x: 0.0,
            support_y: 0.0,
            support_side: SupportSide::Left,
            step_elapsed: 0.0,
            mode: planner.mode,
            fast_rate: planner.fast_rate,
            reference_rate: planner.reference_rate,
            nominal_step_time: planner.nominal_step_time,
            al_alpha: planner.al.alpha,
            al_phi: planner.al.phi,
            al_mu0: planner.al.mu0,
            al_mu_max: planner.al.mu_max,
            al_grad_tol: planner.al.grad_norm_delta_tol,
            al_max_iters: planner.al.max_inner_iters,
            al_inner_per_outer: planner.al.inner_per_outer,
            al_constraint_tol: planner.al.constraint_tol,
            ref_max_iters: planner.reference.max_iters,
            ref_initial_barrier: planner.reference.initial_barrier,
            duration: scenario.duration,
            sim_rate: scenario.sim_rate,
            total_mass: scenario.total_mass,
            recovery_steps: scenario.recovery_steps,
            velocity_tol: scenario.velocity_tol,
            not_ready_grace: scenario.not_ready_grace,
            init_pos_noise: scenario.init_pos_noise,
            init_vel_noise: scenario.init_vel_noise,
            push_force: push.force,
            push_direction: push.direction_deg,
            push_duration: push.duration,
            push_left_touchdown: push.left_touchdown,
            compare_modes: vec![PlannerMode::NoTimeAdp],
            terrain_file: None,
            ramp_deg: None,
            terrain_aware: true,
            footprint: DEFAULT_FOOTPRINT,
            apex_clearance: DEFAULT_APEX_CLEARANCE,
            sweep: SweepKind::Push,
            sweep_modes: sweep.modes,
            sweep_directions: sweep.directions_deg,
            sweep_resolution: sweep.resolution,
            sweep_ceiling: sweep.ceiling,
            sweep_max_ceiling: sweep.max_ceiling,
            terrain_family: TerrainFamily::Slope,
            terrain_params: vec![0.0, 2.5, 5.0, 7.5, 10.0],
            trials: 10,
            sweep_blind: true,
            seed: 0,
        };
        cfg.set_problem_spec(&spec);
        cfg
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))
}

/// Parses the right-hand side of `key=value`; bare words are strings.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, then applies `key=value` overrides in order.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = parse_table(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.problem_spec()?;
        self.planner_config(false).validate()?;
        self.push_event().validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if !(self.sweep_resolution > 0.0 && self.sweep_ceiling > 0.0 && self.sweep_max_ceiling >= self.sweep_ceiling) {
            return Err(Error::Config("sweep needs 0 < resolution, 0 < ceiling <= max_ceiling".into()));
        }
        if self.sweep_modes.is_empty() {
            return Err(Error::Config("sweep_modes is empty".into()));
        }
        if let Some(p) = &self.terrain_file {
            if !p.is_file() {
                return Err(Error::Config(format!("terrain file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let spec = ProblemSpec {
            initial_state: LipState::new(Vec2::new(self.com_x, self.com_y), Vec2::new(self.com_vx, self.com_vy)),
            current_support: Foothold::new(self.support_x, self.support_y),
            support_side: self.support_side,
            ref_velocity: Vec2::new(self.ref_vx, self.ref_vy),
            weights: CostWeights {
                w_x: self.w_x,
                w_y: self.w_y,
            },
            limits: ConstraintLimits {
                l_max: self.l_max,
                v_max: self.v_max,
                r_foot: self.r_foot,
                t_lower: self.t_lower,
                t_upper: self.t_upper,
            },
            params: LipParams::new(self.gravity, self.com_height).map_err(|e| Error::Config(e.to_string()))?,
            horizon: self.horizon,
            step_elapsed: self.step_elapsed,
            adapt_timing: self.mode != PlannerMode::NoTimeAdp,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn set_problem_spec(&mut self, spec: &ProblemSpec) {
        self.horizon = spec.horizon;
        self.gravity = spec.params.g();
        self.com_height = spec.params.h();
        self.l_max = spec.limits.l_max;
        self.v_max = spec.limits.v_max;
        self.r_foot = spec.limits.r_foot;
        self.t_lower = spec.limits.t_lower;
        self.t_upper = spec.limits.t_upper;
        self.w_x = spec.weights.w_x;
        self.w_y = spec.weights.w_y;
        self.ref_vx = spec.ref_velocity.x;
        self.ref_vy = spec.ref_velocity.y;
        self.com_x = spec.initial_state.pos.x;
        self.com_y = spec.initial_state.pos.y;
        self.com_vx = spec.initial_state.vel.x;
        self.com_vy = spec.initial_state.vel.y;
        self.support_x = spec.current_support.xy.x;
        self.support_y = spec.current_support.xy.y;
        self.support_side = spec.support_side;
        self.step_elapsed = spec.step_elapsed;
    }

    pub fn planner_config(&self, threaded: bool) -> PlannerConfig {
        PlannerConfig {
            mode: self.mode,
            al: AlConfig {
                alpha: self.al_alpha,
                phi: self.al_phi,
                mu0: self.al_mu0,
                mu_max: self.al_mu_max,
                grad_norm_delta_tol: self.al_grad_tol,
                max_inner_iters: self.al_max_iters,
                inner_per_outer: self.al_inner_per_outer,
                constraint_tol: self.al_constraint_tol,
                loop_rate: self.fast_rate,
                trace: false,
            },
            reference: RefConfig {
                max_iters: self.ref_max_iters,
                initial_barrier: self.ref_initial_barrier,
                ..RefConfig::default()
            },
            fast_rate: self.fast_rate,
            reference_rate: self.reference_rate,
            nominal_step_time: self.nominal_step_time,
            threaded,
            faults: Default::default(),
        }
    }

    pub fn push_event(&self) -> PushEvent {
        PushEvent {
            force: self.push_force,
            direction_deg: self.push_direction,
            duration: self.push_duration,
            left_touchdown: self.push_left_touchdown,
        }
    }

    /// The configured height map: the file when given, else a generated
    /// ramp, else none.
    pub fn height_map(&self) -> Result<Option<HeightMap>> {
        if let Some(p) = &self.terrain_file {
            return HeightMap::load(p).map(Some);
        }
        match self.ramp_deg {
            Some(a) => crate::sim::terrain_map(TerrainFamily::Slope, a).map(Some),
            None => Ok(None),
        }
    }

    /// Episode scenario without a push.
    pub fn scenario(&self, threaded: bool) -> Result<Scenario> {
        Ok(Scenario {
            planner: self.planner_config(threaded),
            push: None,
            terrain: self.height_map()?.map(Arc::new),
            terrain_aware: self.terrain_aware,
            footprint: self.footprint,
            apex_clearance: self.apex_clearance,
            total_mass: self.total_mass,
            sim_rate: self.sim_rate,
            duration: self.duration,
            recovery_steps: self.recovery_steps,
            velocity_tol: self.velocity_tol,
            not_ready_grace: self.not_ready_grace,
            init_pos_noise: self.init_pos_noise,
            init_vel_noise: self.init_vel_noise,
            record_log: true,
        })
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            modes: self.sweep_modes.clone(),
            directions_deg: self.sweep_directions.clone(),
            resolution: self.sweep_resolution,
            ceiling: self.sweep_ceiling,
            max_ceiling: self.sweep_max_ceiling,
            seed: self.seed,
        }
    }

    /// Success-rate conditions: each sweep mode terrain-aware, plus blind
    /// variants when `sweep_blind` is set.
    pub fn conditions(&self) -> Vec<Condition> {
        let mut out = Vec::new();
        for &mode in &self.sweep_modes {
            out.push(Condition { mode, terrain_aware: true });
            if self.sweep_blind {
                out.push(Condition { mode, terrain_aware: false });
            }
        }
        out
    }
}

/// Writes the problem keys of `spec` as a flat key-value file.
pub fn problem_spec_to_string(spec: &ProblemSpec) -> String {
    let mut cfg = ScenarioConfig::default();
    cfg.set_problem_spec(spec);
    let toml::Value::Table(table) = toml::Value::try_from(&cfg).expect("flat config serializes") else {
        unreachable!("config serializes to a table")
    };
    let mut out = String::new();
    for key in PROBLEM_KEYS {
        if let Some(v) = table.get(key) {
            out.push_str(&format!("{key} = {v}\n"));
        }
    }
    out
}

/// Reads a problem spec from a key-value file. Non-problem keys are
/// accepted and ignored. Timing adaptation is on.
pub fn problem_spec_from_str(text: &str) -> Result<ProblemSpec> {
    let mut cfg = ScenarioConfig::parse(text)?;
    cfg.mode = PlannerMode::ArtoAl;
    cfg.problem_spec()
}
