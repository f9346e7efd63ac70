//! Analytical gradients of the boundary states, the cost, the constraints
//! and the augmented Lagrangian with respect to every foothold and duration.
//!
//! Sensitivities are chained forward through the one-step blocks of
//! [`crate::lip::StepJacobian`]: a foothold or duration only influences the
//! boundary states after the stance phase it belongs to, and from there on
//! each phase maps `(dx, dv)` through `[cosh, sinh/w; w sinh, cosh]` of its
//! own duration.

use serde::{Deserialize, Serialize};

use crate::al::Multipliers;
use crate::error::{Error, Result};
use crate::lip::{step_jacobian_unchecked, LipState, Vec2};
use crate::problem::{
    constraint_layout, constraints_of_states, cost_of_states, ConstraintKind, FootstepPlan,
    ProblemSpec,
};

/// Gradient over the plan variables, in plan layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanGradient {
    pub d_footholds: Vec<Vec2>,
    pub d_durations: Vec<f64>,
}

impl PlanGradient {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            d_footholds: vec![Vec2::zeros(); horizon],
            d_durations: vec![0.0; horizon + 1],
        }
    }

    pub fn from_vector(v: &[f64], horizon: usize) -> Self {
        Self {
            d_footholds: (0..horizon).map(|k| Vec2::new(v[2 * k], v[2 * k + 1])).collect(),
            d_durations: v[2 * horizon..].to_vec(),
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.d_footholds.iter().flat_map(|g| [g.x, g.y]).collect();
        v.extend_from_slice(&self.d_durations);
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|g| g.is_finite())
    }
}

/// Derivatives of the boundary states `x_1..x_{N+1}`.
///
/// Foothold sensitivities are scalars because a foothold coordinate only
/// drives its own axis with the same coefficient on both axes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSensitivities {
    pub horizon: usize,
    pub states: Vec<LipState>,
    /// `pos_foot[j][k] = d x_{j+1} / d u_{k+1}` (per axis).
    pub pos_foot: Vec<Vec<f64>>,
    pub vel_foot: Vec<Vec<f64>>,
    /// `pos_dur[j][k] = d x_{j+1} / d dt_k`.
    pub pos_dur: Vec<Vec<Vec2>>,
    pub vel_dur: Vec<Vec<Vec2>>,
}

impl StateSensitivities {
    fn n_vars(&self) -> usize {
        3 * self.horizon + 1
    }

    /// Derivative of boundary position `j` (0-based) w.r.t. flat variable `var`.
    pub fn dpos(&self, j: usize, var: usize) -> Vec2 {
        self.d(j, var, &self.pos_foot, &self.pos_dur)
    }

    pub fn dvel(&self, j: usize, var: usize) -> Vec2 {
        self.d(j, var, &self.vel_foot, &self.vel_dur)
    }

    fn d(&self, j: usize, var: usize, foot: &[Vec<f64>], dur: &[Vec<Vec2>]) -> Vec2 {
        let n = self.horizon;
        if var < 2 * n {
            let s = foot[j][var / 2];
            if var % 2 == 0 {
                Vec2::new(s, 0.0)
            } else {
                Vec2::new(0.0, s)
            }
        } else {
            dur[j][var - 2 * n]
        }
    }
}

/// Forward sensitivity recursion over the horizon.
pub fn state_sensitivities(spec: &ProblemSpec, plan: &FootstepPlan) -> Result<StateSensitivities> {
    spec.check_plan(plan)?;
    Ok(sensitivities_unchecked(spec, plan))
}

pub(crate) fn sensitivities_unchecked(spec: &ProblemSpec, plan: &FootstepPlan) -> StateSensitivities {
    let n = plan.horizon();
    let omega = spec.params.omega();
    let mut pos_foot = vec![vec![0.0; n]; n + 1];
    let mut vel_foot = vec![vec![0.0; n]; n + 1];
    let mut pos_dur = vec![vec![Vec2::zeros(); n + 1]; n + 1];
    let mut vel_dur = vec![vec![Vec2::zeros(); n + 1]; n + 1];
    let mut states = Vec::with_capacity(n + 1);

    let mut state = spec.initial_state;
    for j in 0..=n {
        // Phase j stands on u_j (u_0 is the current support) for dt_j.
        let dt = plan.durations[j];
        let active = dt >= 0.0;
        let (next, jac) = step_jacobian_unchecked(&state, &spec.stance(plan, j), dt.max(0.0), omega);

        if j > 0 {
            // Variables acting before this phase are carried through it.
            for k in 0..j - 1 {
                let (p, v) = (pos_foot[j - 1][k], vel_foot[j - 1][k]);
                pos_foot[j][k] = jac.dpos_dpos * p + jac.dpos_dvel * v;
                vel_foot[j][k] = jac.dvel_dpos * p + jac.dvel_dvel * v;
            }
            for k in 0..j {
                let (p, v) = (pos_dur[j - 1][k], vel_dur[j - 1][k]);
                pos_dur[j][k] = p * jac.dpos_dpos + v * jac.dpos_dvel;
                vel_dur[j][k] = p * jac.dvel_dpos + v * jac.dvel_dvel;
            }
            // Base case for the stance foot of this phase.
            pos_foot[j][j - 1] = jac.dpos_dfoot;
            vel_foot[j][j - 1] = jac.dvel_dfoot;
        }
        if active {
            pos_dur[j][j] = jac.dpos_ddt;
            vel_dur[j][j] = jac.dvel_ddt;
        }
        states.push(next);
        state = next;
    }

    StateSensitivities {
        horizon: n,
        states,
        pos_foot,
        vel_foot,
        pos_dur,
        vel_dur,
    }
}

/// Gradient of the tracking cost over the flat variable layout.
pub(crate) fn cost_gradient_vec(spec: &ProblemSpec, sens: &StateSensitivities) -> Vec<f64> {
    let q = Vec2::new(spec.weights.w_x, spec.weights.w_y);
    let mut g = vec![0.0; sens.n_vars()];
    for (j, s) in sens.states.iter().enumerate() {
        let e = (s.vel - spec.ref_velocity).component_mul(&q) * 2.0;
        for (var, gv) in g.iter_mut().enumerate() {
            *gv += e.dot(&sens.dvel(j, var));
        }
    }
    g
}

fn unit_or_zero(d: Vec2) -> Vec2 {
    let n = d.norm();
    if n > 0.0 {
        d / n
    } else {
        Vec2::zeros()
    }
}

/// Dense constraint Jacobian, one row per residual in layout order.
pub(crate) fn constraint_jacobian_vec(
    spec: &ProblemSpec,
    plan: &FootstepPlan,
    sens: &StateSensitivities,
) -> Vec<Vec<f64>> {
    let n = plan.horizon();
    let nv = sens.n_vars();
    let foot_var = |k: usize, axis: usize| 2 * (k - 1) + axis;
    let dur_var = |k: usize| 2 * n + k;
    let states = &sens.states;

    constraint_layout(n)
        .into_iter()
        .map(|kind| {
            let mut row = vec![0.0; nv];
            match kind {
                ConstraintKind::NextStepLength(k) | ConstraintKind::CurrentStepLength(k) => {
                    let foot_idx = match kind {
                        ConstraintKind::NextStepLength(_) => k,
                        _ => k - 1,
                    };
                    let dir = unit_or_zero(states[k - 1].pos - spec.stance(plan, foot_idx));
                    for (var, r) in row.iter_mut().enumerate() {
                        *r = dir.dot(&sens.dpos(k - 1, var));
                    }
                    if foot_idx >= 1 {
                        row[foot_var(foot_idx, 0)] -= dir.x;
                        row[foot_var(foot_idx, 1)] -= dir.y;
                    }
                }
                ConstraintKind::Velocity(k) => {
                    let dir = unit_or_zero(states[k - 1].vel);
                    for (var, r) in row.iter_mut().enumerate() {
                        *r = dir.dot(&sens.dvel(k - 1, var));
                    }
                }
                ConstraintKind::NoCrossing(k) => {
                    let s = spec.support_side.after(k - 1).sign();
                    if k >= 2 {
                        row[foot_var(k - 1, 1)] = -s;
                    }
                    row[foot_var(k, 1)] = s;
                }
                ConstraintKind::CurrentStepTimeLower => row[dur_var(0)] = -1.0,
                ConstraintKind::CurrentStepTimeUpper => row[dur_var(0)] = 1.0,
                ConstraintKind::StepTimeLower(k) => row[dur_var(k)] = -1.0,
                ConstraintKind::StepTimeUpper(k) => row[dur_var(k)] = 1.0,
            }
            row
        })
        .collect()
}

/// Cost, residuals, and the augmented Lagrangian gradient in one pass.
pub(crate) struct LagrangianEval {
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub gradient: Vec<f64>,
}

pub(crate) fn lagrangian_eval(
    spec: &ProblemSpec,
    plan: &FootstepPlan,
    mult: &Multipliers,
) -> LagrangianEval {
    let sens = sensitivities_unchecked(spec, plan);
    let cost = cost_of_states(spec, &sens.states);
    let residuals = constraints_of_states(spec, plan, &sens.states);
    let mut gradient = cost_gradient_vec(spec, &sens);
    let jac = constraint_jacobian_vec(spec, plan, &sens);
    for ((row, &c), &lambda) in jac.iter().zip(&residuals).zip(&mult.lambda) {
        // max(0, c) is active from c = 0 upwards.
        if c >= 0.0 {
            let w = lambda + 2.0 * mult.mu * c;
            if w != 0.0 {
                for (g, r) in gradient.iter_mut().zip(row) {
                    *g += w * r;
                }
            }
        }
    }
    LagrangianEval {
        cost,
        residuals,
        gradient,
    }
}

/// Gradient of the tracking cost alone.
pub fn cost_gradient(spec: &ProblemSpec, plan: &FootstepPlan) -> Result<PlanGradient> {
    let sens = state_sensitivities(spec, plan)?;
    Ok(PlanGradient::from_vector(&cost_gradient_vec(spec, &sens), plan.horizon()))
}

/// Residuals and their Jacobian rows (flat plan layout).
pub fn constraint_jacobian(
    spec: &ProblemSpec,
    plan: &FootstepPlan,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let sens = state_sensitivities(spec, plan)?;
    let residuals = constraints_of_states(spec, plan, &sens.states);
    Ok((residuals, constraint_jacobian_vec(spec, plan, &sens)))
}

/// Gradient of the augmented Lagrangian. Inactive inequalities (`c < 0`)
/// contribute nothing.
pub fn lagrangian_gradient(
    spec: &ProblemSpec,
    plan: &FootstepPlan,
    mult: &Multipliers,
) -> Result<PlanGradient> {
    spec.check_plan(plan)?;
    let m = crate::problem::constraint_count(plan.horizon());
    if mult.lambda.len() != m {
        return Err(Error::DimensionMismatch {
            what: "multipliers",
            expected: m,
            got: mult.lambda.len(),
        });
    }
    let eval = lagrangian_eval(spec, plan, mult);
    Ok(PlanGradient::from_vector(&eval.gradient, plan.horizon()))
}
