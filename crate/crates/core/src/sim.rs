//! Closed-loop pendulum walking simulator with impulse pushes and
//! recovery judging, plus push and terrain sweeps built on it.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lip::{propagate_unchecked, Foothold, LipState, Vec2};
use crate::planner::{PlanSource, Planner, PlannerConfig, PlannerInput, PlannerMode, PlannerOutput};
use crate::problem::{FootstepPlan, ProblemSpec, SupportSide};
use crate::swing::{plan_swing, DEFAULT_APEX_CLEARANCE, FootState, SwingTrajectory, Vec3};
use crate::terrain::{fit_plane, query_footprint_height, HeightMap, TerrainPlane, DEFAULT_FOOTPRINT};

/// Vertical speed of a foot that has not met the ground at the planned
/// touchdown time (m/s).
const LOWERING_SPEED: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushEvent {
    /// Magnitude (N).
    pub force: f64,
    /// Direction in the ground plane, counter-clockwise from +x (deg).
    pub direction_deg: f64,
    /// Impulse duration (s).
    pub duration: f64,
    /// Applied at this left-foot touchdown (1 = first).
    pub left_touchdown: u32,
}

impl Default for PushEvent {
    fn default() -> Self {
        Self {
            force: 30.0,
            direction_deg: 270.0,
            duration: 0.1,
            left_touchdown: 3,
        }
    }
}

impl PushEvent {
    pub fn validate(&self) -> Result<()> {
        if !(self.force >= 0.0 && self.force.is_finite()) || !(self.duration > 0.0) || !self.direction_deg.is_finite() {
            return Err(Error::InvalidInput(format!("invalid push {self:?}")));
        }
        Ok(())
    }

    pub fn delta_v(&self, mass: f64) -> Vec2 {
        let a = self.direction_deg.to_radians();
        Vec2::new(a.cos(), a.sin()) * (self.force * self.duration / mass)
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub planner: PlannerConfig,
    pub push: Option<PushEvent>,
    pub terrain: Option<Arc<HeightMap>>,
    /// Use the height map for swing targets and CoM height.
    pub terrain_aware: bool,
    /// Half-width of the square footprint averaged for heights (m).
    pub footprint: f64,
    /// Swing apex above the higher endpoint (m).
    pub apex_clearance: f64,
    pub total_mass: f64,
    pub sim_rate: f64,
    /// Simulated time without a push, or the limit after the push (s).
    pub duration: f64,
    /// Consecutive steps within `velocity_tol` that count as recovered.
    pub recovery_steps: usize,
    pub velocity_tol: f64,
    /// How long the planner may stay not-ready before the episode fails (s).
    pub not_ready_grace: f64,
    /// Radius of the random initial CoM position offset (m).
    pub init_pos_noise: f64,
    /// Radius of the random initial CoM velocity offset (m/s).
    pub init_vel_noise: f64,
    /// Record one log row per planner tick.
    pub record_log: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            push: None,
            terrain: None,
            terrain_aware: true,
            footprint: DEFAULT_FOOTPRINT,
            apex_clearance: DEFAULT_APEX_CLEARANCE,
            total_mass: 14.0,
            sim_rate: 1000.0,
            duration: 6.0,
            recovery_steps: 6,
            velocity_tol: 0.05,
            not_ready_grace: 0.05,
            init_pos_noise: 0.0,
            init_vel_noise: 0.0,
            record_log: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub start_time: f64,
    pub duration: f64,
    pub side: SupportSide,
    pub foothold: Foothold,
    /// CoM displacement over this and the previous step divided by their
    /// total duration.
    pub stride_velocity: Vec2,
    pub after_push: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub time: f64,
    pub state: LipState,
    pub com_z: f64,
    pub support: Foothold,
    pub side: SupportSide,
    pub durations: Vec<f64>,
    pub footholds: Vec<Foothold>,
    pub source: Option<PlanSource>,
    pub feasible: bool,
    pub plane: TerrainPlane,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Completed post-push steps before the stable run (counted from the
    /// start when there is no push).
    pub steps_to_recover: Option<usize>,
    pub failure: Option<String>,
    pub sim_time: f64,
    pub steps: Vec<StepRecord>,
    pub fallback_ticks: usize,
    #[serde(skip)]
    pub log: Vec<TickRecord>,
}

#[derive(Serialize)]
struct EpisodeSummary<'a> {
    mode: &'a str,
    success: bool,
    steps_to_recover: Option<usize>,
    failure: Option<&'a str>,
    sim_time: f64,
    steps_taken: usize,
    fallback_ticks: usize,
}

impl EpisodeResult {
    pub fn write_log_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# time s, com m, com_vel m/s, support m, durations s, footholds m")?;
        writeln!(
            out,
            "time,com_x,com_y,com_z,vel_x,vel_y,support_x,support_y,support_z,side,dt0,dt1,dt2,u1_x,u1_y,u2_x,u2_y,source,feasible,plane_alpha,plane_beta,plane_offset"
        )?;
        for r in &self.log {
            let d = |i: usize| r.durations.get(i).copied().unwrap_or(f64::NAN);
            let u = |i: usize| r.footholds.get(i).map_or((f64::NAN, f64::NAN), |f| (f.xy.x, f.xy.y));
            let side = match r.side {
                SupportSide::Left => "left",
                SupportSide::Right => "right",
            };
            writeln!(
                out,
                "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{:.6},{:.6},{:.6}",
                r.time,
                r.state.pos.x,
                r.state.pos.y,
                r.com_z,
                r.state.vel.x,
                r.state.vel.y,
                r.support.xy.x,
                r.support.xy.y,
                r.support.z,
                side,
                d(0),
                d(1),
                d(2),
                u(0).0,
                u(0).1,
                u(1).0,
                u(1).1,
                r.source.map_or("none", |s| s.name()),
                r.feasible,
                r.plane.alpha,
                r.plane.beta,
                r.plane.offset,
            )?;
        }
        Ok(())
    }

    pub fn write_steps_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# start s, duration s, foothold m, stride velocity m/s")?;
        writeln!(out, "step,start,duration,side,foot_x,foot_y,foot_z,stride_vx,stride_vy,after_push")?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(
                out,
                "{},{:.3},{:.3},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                i,
                s.start_time,
                s.duration,
                if s.side == SupportSide::Left { "left" } else { "right" },
                s.foothold.xy.x,
                s.foothold.xy.y,
                s.foothold.z,
                s.stride_velocity.x,
                s.stride_velocity.y,
                s.after_push
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self, mode: PlannerMode) -> String {
        let s = EpisodeSummary {
            mode: mode.name(),
            success: self.success,
            steps_to_recover: self.steps_to_recover,
            failure: self.failure.as_deref(),
            sim_time: (self.sim_time * 1e3).round() / 1e3,
            steps_taken: self.steps.len(),
            fallback_ticks: self.fallback_ticks,
        };
        serde_json::to_string_pretty(&s).expect("summary serializes")
    }
}

struct Terrain<'a> {
    map: &'a HeightMap,
    footprint: f64,
    aware: bool,
    plane: TerrainPlane,
}

impl Terrain<'_> {
    fn height(&self, p: &Vec2) -> f64 {
        query_footprint_height(self.map, p, self.footprint).unwrap_or(f64::NAN)
    }

    fn update_plane(&mut self, support: &Foothold, plan: &FootstepPlan) {
        if let Ok(p) = fit_plane(self.map, support, &plan.footholds[..plan.horizon().min(2)], self.footprint) {
            self.plane = p;
            return;
        }
        // Stepping in place gives collinear points; widen the query set.
        let mut extra: Vec<Foothold> = plan.footholds.clone();
        for d in [Vec2::new(0.1, 0.0), Vec2::new(-0.1, 0.0)] {
            extra.push(Foothold::with_z(support.xy + d, 0.0));
        }
        if let Ok(p) = fit_plane(self.map, support, &extra, self.footprint) {
            self.plane = p;
        }
    }
}

fn unit_disc(rng: &mut ChaCha8Rng) -> Vec2 {
    loop {
        let v = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

/// Number of completed steps before the first run of `m` consecutive steps
/// whose stride velocity error is below `tol`.
pub fn recovery_index(steps: &[StepRecord], ref_velocity: &Vec2, m: usize, tol: f64) -> Option<usize> {
    let mut run = 0;
    for (i, s) in steps.iter().enumerate() {
        if (s.stride_velocity - ref_velocity).norm() < tol {
            run += 1;
            if run == m {
                return Some(i + 1 - m);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Simulates one walking episode.
pub fn run_episode(spec: &ProblemSpec, scenario: &Scenario, seed: u64) -> Result<EpisodeResult> {
    spec.validate()?;
    if let Some(p) = &scenario.push {
        p.validate()?;
    }
    if !(scenario.sim_rate > 0.0 && scenario.total_mass > 0.0 && scenario.duration > 0.0) {
        return Err(Error::InvalidInput("sim rate, mass and duration must be > 0".into()));
    }
    if !(scenario.footprint > 0.0 && scenario.apex_clearance >= 0.0) {
        return Err(Error::InvalidInput("footprint must be > 0 and apex clearance >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = spec.initial_state;
    state.pos += unit_disc(&mut rng) * scenario.init_pos_noise;
    state.vel += unit_disc(&mut rng) * scenario.init_vel_noise;

    let mut planner = Planner::new(spec.clone(), scenario.planner.clone())?;
    let dt = 1.0 / scenario.sim_rate;
    let ticks_per_plan = ((scenario.sim_rate / scenario.planner.fast_rate).round() as u64).max(1);
    let omega = spec.params.omega();
    let h0 = spec.params.h();
    let lim = spec.limits;
    let max_leg = (lim.l_max * lim.l_max + h0 * h0).sqrt();

    let mut terrain = scenario.terrain.as_deref().map(|map| Terrain {
        map,
        footprint: scenario.footprint,
        aware: scenario.terrain_aware,
        plane: TerrainPlane::flat(spec.current_support.z),
    });
    let mut support = spec.current_support;
    if let Some(t) = &terrain {
        support.z = t.height(&support.xy);
        if !support.z.is_finite() {
            return Err(Error::NoData {
                x: support.xy.x,
                y: support.xy.y,
            });
        }
        let p = t.plane;
        if let Some(tm) = terrain.as_mut() {
            tm.plane = TerrainPlane::new(p.alpha, p.beta, support.z);
        }
    }
    let mut side = spec.support_side;
    let mut swing_foot = Vec3::new(
        support.xy.x,
        support.xy.y - side.sign() * 2.0 * lim.r_foot,
        support.z,
    );
    let mut swing: Option<SwingTrajectory> = None;
    let mut swing_t = 0.0;

    let mut time = 0.0;
    let mut elapsed = spec.step_elapsed;
    let mut step_index = 0u64;
    let mut remaining = f64::INFINITY;
    let mut output: Option<PlannerOutput> = None;
    let mut not_ready_since: Option<f64> = Some(0.0);
    let mut step_start = (time, state.pos);
    let mut prev_step: Option<(f64, Vec2)> = None;
    let mut left_touchdowns = 0u32;
    let mut pushed_at: Option<usize> = None;
    let mut lowering: Option<Vec3> = None;
    let mut result = EpisodeResult {
        success: false,
        steps_to_recover: None,
        failure: None,
        sim_time: 0.0,
        steps: Vec::new(),
        fallback_ticks: 0,
        log: Vec::new(),
    };
    let plane_every = ((scenario.planner.fast_rate / 5.0).round() as u64).max(1);
    let mut plan_ticks = 0u64;
    let mut end_time = if scenario.push.is_some() { f64::INFINITY } else { scenario.duration };
    let n_ticks_max = ((scenario.duration + 30.0) * scenario.sim_rate) as u64;

    let com_z = |terrain: &Option<Terrain>, support: &Foothold, pos: &Vec2| match terrain {
        Some(t) if t.aware => t.plane.height_at(pos) + h0,
        _ => support.z + h0,
    };

    let wall = Instant::now();
    for tick in 0..n_ticks_max {
        if time >= end_time {
            break;
        }
        if tick % ticks_per_plan == 0 {
            if scenario.planner.threaded {
                // The worker runs on wall time, so the simulation does too.
                let target = Duration::from_secs_f64(time);
                if let Some(wait) = target.checked_sub(wall.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
            let input = PlannerInput {
                time,
                state,
                support,
                side,
                elapsed,
                step_index,
            };
            match planner.step(&input) {
                Ok(out) => {
                    if out.source == PlanSource::Reference && scenario.planner.mode != PlannerMode::RefOnly {
                        result.fallback_ticks += 1;
                    }
                    remaining = out.plan.durations[0];
                    output = Some(out);
                    not_ready_since = None;
                }
                Err(Error::NotReady) => {
                    let since = *not_ready_since.get_or_insert(time);
                    if time - since > scenario.not_ready_grace {
                        result.failure = Some("planner not ready".into());
                        break;
                    }
                }
                Err(e) => return Err(e),
            }
            if let (Some(t), Some(out)) = (terrain.as_mut(), &output) {
                if plan_ticks % plane_every == 0 && t.aware {
                    t.update_plane(&support, &out.plan);
                }
            }
            plan_ticks += 1;
            if let (Some(out), None) = (&output, lowering) {
                // Retarget the swing foot toward the current plan.
                let target_xy = out.plan.footholds[0].xy;
                let target_z = match &terrain {
                    Some(t) if t.aware => t.height(&target_xy),
                    _ => f64::NAN,
                };
                let target_z = if target_z.is_finite() { target_z } else { support.z };
                let target = Vec3::new(target_xy.x, target_xy.y, target_z);
                if remaining > 0.02 {
                    swing = Some(match &swing {
                        Some(s) => s.replan(swing_t, &target, remaining)?,
                        None => plan_swing(
                            &FootState::at_rest(swing_foot),
                            &target,
                            remaining,
                            swing_foot.z.max(target.z) + scenario.apex_clearance,
                        )?,
                    });
                    swing_t = 0.0;
                }
            }
            if scenario.record_log {
                let (durations, footholds, source, feasible) = output.as_ref().map_or(
                    (Vec::new(), Vec::new(), None, false),
                    |o| (o.plan.durations.clone(), o.plan.footholds.clone(), Some(o.source), o.feasible),
                );
                result.log.push(TickRecord {
                    time,
                    state,
                    com_z: com_z(&terrain, &support, &state.pos),
                    support,
                    side,
                    durations,
                    footholds,
                    source,
                    feasible,
                    plane: terrain.as_ref().map_or(TerrainPlane::flat(support.z), |t| t.plane),
                });
            }
        }

        state = propagate_unchecked(&state, &support.xy, dt, omega);
        time += dt;
        elapsed += dt;
        remaining -= dt;
        swing_t += dt;

        let z = com_z(&terrain, &support, &state.pos);
        let leg = Vec3::new(state.pos.x - support.xy.x, state.pos.y - support.xy.y, z - support.z);
        if leg.norm() > max_leg {
            result.failure = Some(format!("leg overextended at t={time:.3}"));
            break;
        }
        if state.vel.norm() > 2.0 * lim.v_max {
            result.failure = Some(format!("CoM speed limit exceeded at t={time:.3}"));
            break;
        }

        let Some(out) = &output else { continue };
        let blind = terrain.as_ref().is_some_and(|t| !t.aware);
        let touchdown = match (&terrain, &swing) {
            (Some(t), Some(sw)) if blind => {
                let f = lowering.unwrap_or_else(|| sw.eval(swing_t).pos);
                let ground = t.height(&f.xy());
                if !ground.is_finite() {
                    result.failure = Some(format!("foot left the map at t={time:.3}"));
                    break;
                }
                if (sw.descending(swing_t) || lowering.is_some()) && f.z <= ground + 1e-9 {
                    Some(Vec3::new(f.x, f.y, ground))
                } else {
                    if remaining <= 1e-9 {
                        // Foot still above ground at the planned time.
                        lowering = Some(Vec3::new(f.x, f.y, f.z - LOWERING_SPEED * dt));
                    }
                    None
                }
            }
            _ if remaining <= 1e-9 => {
                let target = out.plan.footholds[0];
                let z = terrain.as_ref().map_or(support.z, |t| t.height(&target.xy));
                Some(Vec3::new(target.xy.x, target.xy.y, if z.is_finite() { z } else { support.z }))
            }
            _ => None,
        };
        let Some(td) = touchdown else { continue };
        lowering = None;

        // Support switch.
        let step_time = time - step_start.0;
        let stride_start = prev_step.map_or(step_start, |p| p);
        let stride_velocity = (state.pos - stride_start.1) / (time - stride_start.0);
        let in_push_phase = pushed_at.is_some();
        result.steps.push(StepRecord {
            start_time: step_start.0,
            duration: step_time,
            side,
            foothold: support,
            stride_velocity,
            after_push: in_push_phase,
        });
        if step_time < lim.t_lower - 0.05 && result.steps.len() > 1 {
            result.failure = Some(format!("step of {step_time:.3} s below the minimum duration"));
            break;
        }
        prev_step = Some(step_start);
        step_start = (time, state.pos);
        swing_foot = Vec3::new(support.xy.x, support.xy.y, support.z);
        support = Foothold::with_z(td.xy(), td.z);
        side = side.other();
        elapsed = 0.0;
        step_index += 1;
        remaining = out.plan.durations.get(1).copied().unwrap_or(0.4);
        swing = None;
        swing_t = 0.0;

        if side == SupportSide::Left {
            left_touchdowns += 1;
            if let Some(push) = &scenario.push {
                if pushed_at.is_none() && left_touchdowns == push.left_touchdown {
                    state.vel += push.delta_v(scenario.total_mass);
                    pushed_at = Some(result.steps.len());
                    end_time = time + scenario.duration;
                }
            }
        }

        let judged: &[StepRecord] = match pushed_at {
            Some(i) => &result.steps[i..],
            None if scenario.push.is_none() => &result.steps,
            None => &[],
        };
        if let Some(k) = recovery_index(judged, &spec.ref_velocity, scenario.recovery_steps, scenario.velocity_tol) {
            result.steps_to_recover = Some(k);
            if pushed_at.is_some() {
                result.success = true;
                break;
            }
        }
    }

    result.sim_time = time;
    if result.failure.is_none() {
        if scenario.push.is_some() && pushed_at.is_none() {
            result.failure = Some("push never triggered".into());
        } else if result.steps_to_recover.is_none() {
            result.failure = Some("no stable walk within the episode".into());
        } else {
            result.success = true;
        }
    }
    if result.failure.is_some() {
        result.success = false;
    }
    Ok(result)
}

/// Largest recoverable force per direction for one planner mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub mode: PlannerMode,
    pub direction_deg: f64,
    pub max_force: f64,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub modes: Vec<PlannerMode>,
    pub directions_deg: Vec<f64>,
    /// Bisection resolution (N).
    pub resolution: f64,
    /// Initial failure bracket (N); doubled until an episode fails.
    pub ceiling: f64,
    pub max_ceiling: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            modes: vec![PlannerMode::ArtoAl, PlannerMode::AlOnly, PlannerMode::RefOnly, PlannerMode::NoTimeAdp],
            directions_deg: (0..8).map(|i| i as f64 * 45.0).collect(),
            resolution: 5.0,
            ceiling: 160.0,
            max_ceiling: 1280.0,
            seed: 0,
        }
    }
}

fn push_succeeds(spec: &ProblemSpec, base: &Scenario, mode: PlannerMode, dir: f64, force: f64, seed: u64) -> bool {
    let mut sc = base.clone();
    sc.planner.mode = mode;
    sc.record_log = false;
    sc.push = Some(PushEvent {
        force,
        direction_deg: dir,
        ..base.push.unwrap_or_default()
    });
    run_episode(spec, &sc, seed).is_ok_and(|r| r.success)
}

/// Bisection on the push force for one mode and direction. Returns the
/// largest tested force that was recovered (a multiple of `resolution`).
pub fn max_recoverable_force(
    spec: &ProblemSpec,
    base: &Scenario,
    mode: PlannerMode,
    direction_deg: f64,
    cfg: &SweepConfig,
) -> f64 {
    let res = cfg.resolution;
    let ok = |units: u64| push_succeeds(spec, base, mode, direction_deg, units as f64 * res, cfg.seed);
    if !ok(0) {
        return 0.0;
    }
    let mut lo = 0u64;
    let mut hi = (cfg.ceiling / res).ceil() as u64;
    while ok(hi) {
        lo = hi;
        if hi as f64 * res >= cfg.max_ceiling {
            return hi as f64 * res;
        }
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo as f64 * res
}

/// Maximum recoverable push per mode and direction. Runs in parallel; the
/// table order follows `cfg.modes` then `cfg.directions_deg`.
pub fn push_sweep(spec: &ProblemSpec, base: &Scenario, cfg: &SweepConfig) -> Vec<SweepEntry> {
    let jobs: Vec<(PlannerMode, f64)> = cfg
        .modes
        .iter()
        .flat_map(|&m| cfg.directions_deg.iter().map(move |&d| (m, d)))
        .collect();
    jobs.par_iter()
        .map(|&(mode, dir)| SweepEntry {
            mode,
            direction_deg: dir,
            max_force: max_recoverable_force(spec, base, mode, dir, cfg),
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepEntry], mut out: W) -> std::io::Result<()> {
    writeln!(out, "# direction deg, max_force N")?;
    writeln!(out, "direction_deg,mode,max_force")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.direction_deg, r.mode.name(), r.max_force)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainFamily {
    /// Ramp angle (deg).
    Slope,
    /// Step height (m).
    Steps,
}

/// A planner mode with or without terrain perception.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub mode: PlannerMode,
    pub terrain_aware: bool,
}

impl Condition {
    pub fn label(&self) -> String {
        format!("{}-{}", self.mode.name(), if self.terrain_aware { "aware" } else { "blind" })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessRateRow {
    pub parameter: f64,
    pub condition: String,
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
}

/// Map for a terrain family member, large enough for a few meters of
/// forward walking.
pub fn terrain_map(family: TerrainFamily, parameter: f64) -> Result<HeightMap> {
    let origin = Vec2::new(-1.0, -1.0);
    let (res, rows, cols) = (0.02, 101, 301);
    match family {
        TerrainFamily::Slope => HeightMap::ramp(origin, res, rows, cols, parameter),
        TerrainFamily::Steps => HeightMap::steps(origin, res, rows, cols, 0.3, parameter),
    }
}

/// Success rates over randomized initial CoM states for each terrain
/// parameter and condition.
pub fn success_rate_sweep(
    spec: &ProblemSpec,
    base: &Scenario,
    conditions: &[Condition],
    family: TerrainFamily,
    parameters: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<SuccessRateRow>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let maps = parameters
        .iter()
        .map(|&p| terrain_map(family, p).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (pi, _) in parameters.iter().enumerate() {
        for (ci, _) in conditions.iter().enumerate() {
            for t in 0..trials {
                jobs.push((pi, ci, t));
            }
        }
    }
    let outcomes: Vec<bool> = jobs
        .par_iter()
        .map(|&(pi, ci, t)| {
            let mut sc = base.clone();
            sc.terrain = Some(Arc::clone(&maps[pi]));
            sc.terrain_aware = conditions[ci].terrain_aware;
            sc.planner.mode = conditions[ci].mode;
            sc.record_log = false;
            sc.push = None;
            let trial_seed = seed ^ ((pi as u64) << 40) ^ ((t as u64) << 8);
            run_episode(spec, &sc, trial_seed).is_ok_and(|r| r.success)
        })
        .collect();
    let mut rows = Vec::new();
    let mut it = outcomes.iter();
    for &p in parameters {
        for c in conditions {
            let successes = it.by_ref().take(trials).filter(|ok| **ok).count();
            rows.push(SuccessRateRow {
                parameter: p,
                condition: c.label(),
                successes,
                trials,
                rate: successes as f64 / trials as f64,
            });
        }
    }
    Ok(rows)
}

pub fn write_success_csv<W: Write>(rows: &[SuccessRateRow], family: TerrainFamily, mut out: W) -> std::io::Result<()> {
    let unit = match family {
        TerrainFamily::Slope => "slope_deg",
        TerrainFamily::Steps => "step_height_m",
    };
    writeln!(out, "# success rate over randomized initial states")?;
    writeln!(out, "{unit},condition,successes,trials,rate")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.parameter, r.condition, r.successes, r.trials, r.rate)?;
    }
    Ok(())
}
