//! The footstep optimal control problem: decision vector, rollout, velocity
//! tracking cost and the kinematic/timing constraint block.

use serde::{Deserialize, Serialize};

use crate::al::Multipliers;
use crate::error::{Error, Result};
use crate::lip::{propagate_unchecked, Foothold, LipParams, LipState, Vec2};

/// Which foot is currently in stance. The left foot sits at larger `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportSide {
    Left,
    Right,
}

impl SupportSide {
    pub fn other(self) -> Self {
        match self {
            SupportSide::Left => SupportSide::Right,
            SupportSide::Right => SupportSide::Left,
        }
    }

    /// +1 for left, -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            SupportSide::Left => 1.0,
            SupportSide::Right => -1.0,
        }
    }

    /// Side of the stance foot `k` steps from now.
    pub fn after(self, k: usize) -> Self {
        if k % 2 == 0 {
            self
        } else {
            self.other()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintLimits {
    /// Maximum horizontal CoM-to-foot distance (m).
    pub l_max: f64,
    /// Maximum CoM speed at step boundaries (m/s).
    pub v_max: f64,
    /// Minimum lateral separation between consecutive footholds (m).
    pub r_foot: f64,
    pub t_lower: f64,
    pub t_upper: f64,
}

impl Default for ConstraintLimits {
    fn default() -> Self {
        Self {
            l_max: 0.5,
            v_max: 1.0,
            r_foot: 0.1,
            t_lower: 0.2,
            t_upper: 0.8,
        }
    }
}

impl ConstraintLimits {
    pub fn validate(&self) -> Result<()> {
        let all = [self.l_max, self.v_max, self.r_foot, self.t_lower, self.t_upper];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidInput("constraint limits must be finite and > 0".into()));
        }
        if self.t_lower >= self.t_upper {
            return Err(Error::InvalidInput(format!(
                "t_lower ({}) must be below t_upper ({})",
                self.t_lower, self.t_upper
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_x: f64,
    pub w_y: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w_x: 1.0, w_y: 1.0 }
    }
}

/// Future footholds `u_1..u_N` and durations `dt_0..dt_N`, where `dt_0` is
/// the remaining time on the current support foot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootstepPlan {
    pub footholds: Vec<Foothold>,
    pub durations: Vec<f64>,
}

impl FootstepPlan {
    pub fn new(footholds: Vec<Foothold>, durations: Vec<f64>) -> Result<Self> {
        let plan = Self { footholds, durations };
        plan.check_shape()?;
        Ok(plan)
    }

    fn check_shape(&self) -> Result<()> {
        if self.footholds.is_empty() {
            return Err(Error::InvalidInput("plan needs at least one foothold".into()));
        }
        if self.durations.len() != self.footholds.len() + 1 {
            return Err(Error::DimensionMismatch {
                what: "plan durations",
                expected: self.footholds.len() + 1,
                got: self.durations.len(),
            });
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.footholds.len()
    }

    /// Number of scalar decision variables, `3N + 1`.
    pub fn n_vars(&self) -> usize {
        3 * self.horizon() + 1
    }

    /// Flat layout: `[u1x, u1y, .., uNx, uNy, dt0, .., dtN]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_vars());
        for f in &self.footholds {
            v.push(f.xy.x);
            v.push(f.xy.y);
        }
        v.extend_from_slice(&self.durations);
        v
    }

    /// Overwrites footholds and durations from a flat vector, keeping the
    /// foothold heights.
    pub fn set_from_vector(&mut self, v: &[f64]) {
        let n = self.horizon();
        debug_assert_eq!(v.len(), 3 * n + 1);
        for (k, f) in self.footholds.iter_mut().enumerate() {
            f.xy = Vec2::new(v[2 * k], v[2 * k + 1]);
        }
        self.durations.copy_from_slice(&v[2 * n..]);
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    pub fn mirrored(&self) -> Self {
        Self {
            footholds: self.footholds.iter().map(Foothold::mirrored).collect(),
            durations: self.durations.clone(),
        }
    }

    /// Largest absolute difference over all decision variables.
    pub fn max_abs_diff(&self, other: &FootstepPlan) -> f64 {
        self.to_vector()
            .iter()
            .zip(other.to_vector())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One instance of the footstep planning problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub initial_state: LipState,
    pub current_support: Foothold,
    pub support_side: SupportSide,
    pub ref_velocity: Vec2,
    pub weights: CostWeights,
    pub limits: ConstraintLimits,
    pub params: LipParams,
    pub horizon: usize,
    /// Time already spent on the current support foot (s).
    pub step_elapsed: f64,
    /// When false the durations are treated as constants.
    pub adapt_timing: bool,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            initial_state: LipState::default(),
            current_support: Foothold::new(0.0, 0.05),
            support_side: SupportSide::Left,
            ref_velocity: Vec2::zeros(),
            weights: CostWeights::default(),
            limits: ConstraintLimits::default(),
            params: LipParams::default(),
            horizon: 2,
            step_elapsed: 0.0,
            adapt_timing: true,
        }
    }
}

/// What a constraint residual measures. Step indices follow the plan: `k`
/// is the boundary state at the end of duration `dt_{k-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    /// `|x_k - u_k| <= l_max`
    NextStepLength(usize),
    /// `|x_k - u_{k-1}| <= l_max`
    CurrentStepLength(usize),
    /// `|v_k| <= v_max`
    Velocity(usize),
    /// Lateral separation between `u_{k-1}` and `u_k`.
    NoCrossing(usize),
    CurrentStepTimeLower,
    CurrentStepTimeUpper,
    StepTimeLower(usize),
    StepTimeUpper(usize),
}

/// Constraint ordering for a horizon of `n` footsteps.
pub fn constraint_layout(n: usize) -> Vec<ConstraintKind> {
    let mut out = Vec::with_capacity(6 * n + 4);
    for k in 1..=n + 1 {
        if k <= n {
            out.push(ConstraintKind::NextStepLength(k));
        }
        out.push(ConstraintKind::CurrentStepLength(k));
        out.push(ConstraintKind::Velocity(k));
    }
    for k in 1..=n {
        out.push(ConstraintKind::NoCrossing(k));
    }
    out.push(ConstraintKind::CurrentStepTimeLower);
    out.push(ConstraintKind::CurrentStepTimeUpper);
    for k in 1..=n {
        out.push(ConstraintKind::StepTimeLower(k));
        out.push(ConstraintKind::StepTimeUpper(k));
    }
    out
}

pub fn constraint_count(n: usize) -> usize {
    6 * n + 4
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.limits.validate()?;
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be >= 1".into()));
        }
        if self.weights.w_x < 0.0 || self.weights.w_y < 0.0 {
            return Err(Error::InvalidInput("cost weights must be non-negative".into()));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::InvalidInput("initial state must be finite".into()));
        }
        Ok(())
    }

    pub(crate) fn check_plan(&self, plan: &FootstepPlan) -> Result<()> {
        plan.check_shape()?;
        if plan.horizon() != self.horizon {
            return Err(Error::DimensionMismatch {
                what: "plan horizon",
                expected: self.horizon,
                got: plan.horizon(),
            });
        }
        Ok(())
    }

    /// Foothold of the stance phase that uses `dt_k`.
    pub(crate) fn stance(&self, plan: &FootstepPlan, k: usize) -> Vec2 {
        if k == 0 {
            self.current_support.xy
        } else {
            plan.footholds[k - 1].xy
        }
    }

    /// Nominal plan stepping in place around the current support foot.
    pub fn nominal_plan(&self, step_time: f64) -> FootstepPlan {
        let width = 2.0 * self.limits.r_foot;
        let mut footholds = Vec::with_capacity(self.horizon);
        let base = self.current_support.xy;
        for k in 1..=self.horizon {
            let side = self.support_side.after(k);
            let y = if side == self.support_side {
                base.y
            } else {
                base.y - self.support_side.sign() * width
            };
            footholds.push(Foothold::with_z(Vec2::new(base.x, y), self.current_support.z));
        }
        let mut durations = vec![step_time; self.horizon + 1];
        durations[0] = (step_time - self.step_elapsed).max(0.0);
        FootstepPlan { footholds, durations }
    }

    /// Mirror about the x axis, swapping the support side.
    pub fn mirrored(&self) -> Self {
        Self {
            initial_state: self.initial_state.mirrored(),
            current_support: self.current_support.mirrored(),
            support_side: self.support_side.other(),
            ref_velocity: Vec2::new(self.ref_velocity.x, -self.ref_velocity.y),
            ..self.clone()
        }
    }
}

/// Boundary states at the end of `dt_0 .. dt_N`. A negative remaining time
/// (imminent switch) is evaluated as zero.
pub fn rollout(spec: &ProblemSpec, plan: &FootstepPlan) -> Result<Vec<LipState>> {
    spec.check_plan(plan)?;
    Ok(rollout_unchecked(spec, plan))
}

pub(crate) fn rollout_unchecked(spec: &ProblemSpec, plan: &FootstepPlan) -> Vec<LipState> {
    let omega = spec.params.omega();
    let mut state = spec.initial_state;
    let mut out = Vec::with_capacity(plan.horizon() + 1);
    for k in 0..=plan.horizon() {
        let foot = spec.stance(plan, k);
        state = propagate_unchecked(&state, &foot, plan.durations[k].max(0.0), omega);
        out.push(state);
    }
    out
}

pub(crate) fn cost_of_states(spec: &ProblemSpec, states: &[LipState]) -> f64 {
    states
        .iter()
        .map(|s| {
            let e = s.vel - spec.ref_velocity;
            spec.weights.w_x * e.x * e.x + spec.weights.w_y * e.y * e.y
        })
        .sum()
}

/// Weighted squared velocity error summed over the boundary states.
pub fn cost(spec: &ProblemSpec, plan: &FootstepPlan) -> Result<f64> {
    let states = rollout(spec, plan)?;
    Ok(cost_of_states(spec, &states))
}

pub(crate) fn constraints_of_states(
    spec: &ProblemSpec,
    plan: &FootstepPlan,
    states: &[LipState],
) -> Vec<f64> {
    let lim = &spec.limits;
    let n = plan.horizon();
    let mut out = Vec::with_capacity(constraint_count(n));
    for kind in constraint_layout(n) {
        let c = match kind {
            ConstraintKind::NextStepLength(k) => {
                (states[k - 1].pos - plan.footholds[k - 1].xy).norm() - lim.l_max
            }
            ConstraintKind::CurrentStepLength(k) => {
                (states[k - 1].pos - spec.stance(plan, k - 1)).norm() - lim.l_max
            }
            ConstraintKind::Velocity(k) => states[k - 1].vel.norm() - lim.v_max,
            ConstraintKind::NoCrossing(k) => {
                let side = spec.support_side.after(k - 1);
                let prev = spec.stance(plan, k - 1).y;
                let next = plan.footholds[k - 1].xy.y;
                lim.r_foot - side.sign() * (prev - next)
            }
            ConstraintKind::CurrentStepTimeLower => {
                lim.t_lower - (spec.step_elapsed + plan.durations[0])
            }
            ConstraintKind::CurrentStepTimeUpper => {
                spec.step_elapsed + plan.durations[0] - lim.t_upper
            }
            ConstraintKind::StepTimeLower(k) => lim.t_lower - plan.durations[k],
            ConstraintKind::StepTimeUpper(k) => plan.durations[k] - lim.t_upper,
        };
        out.push(c);
    }
    out
}

/// All residuals, feasible when `<= 0`, ordered as [`constraint_layout`].
pub fn constraint_values(spec: &ProblemSpec, plan: &FootstepPlan) -> Result<Vec<f64>> {
    let states = rollout(spec, plan)?;
    Ok(constraints_of_states(spec, plan, &states))
}

pub fn max_violation(residuals: &[f64]) -> f64 {
    residuals.iter().fold(0.0, |m, &c| m.max(c))
}

/// Augmented Lagrangian `f + sum(l_j c+_j) + mu sum(c+_j^2)` with
/// `c+ = max(0, c)`.
pub fn augmented_lagrangian(
    spec: &ProblemSpec,
    plan: &FootstepPlan,
    mult: &Multipliers,
) -> Result<f64> {
    let states = rollout(spec, plan)?;
    let residuals = constraints_of_states(spec, plan, &states);
    if mult.lambda.len() != residuals.len() {
        return Err(Error::DimensionMismatch {
            what: "multipliers",
            expected: residuals.len(),
            got: mult.lambda.len(),
        });
    }
    Ok(al_value(cost_of_states(spec, &states), &residuals, mult))
}

pub(crate) fn al_value(cost: f64, residuals: &[f64], mult: &Multipliers) -> f64 {
    cost + residuals
        .iter()
        .zip(&mult.lambda)
        .map(|(&c, &l)| {
            let a = c.max(0.0);
            l * a + mult.mu * a * a
        })
        .sum::<f64>()
}
