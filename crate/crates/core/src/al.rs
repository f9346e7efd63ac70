//! Fast augmented Lagrangian solver: projected gradient descent on the
//! augmented Lagrangian with first-order multiplier updates and a growing
//! penalty.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::lagrangian_eval;
use crate::lip::propagate_unchecked;
use crate::problem::{al_value, constraint_count, max_violation, FootstepPlan, ProblemSpec};

/// Lagrange multipliers (one per residual) and the quadratic penalty weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub lambda: Vec<f64>,
    pub mu: f64,
}

impl Multipliers {
    pub fn zeros(horizon: usize, mu: f64) -> Self {
        Self {
            lambda: vec![0.0; constraint_count(horizon)],
            mu,
        }
    }

    /// Inequality multipliers are kept non-negative.
    pub fn clamp_nonnegative(&mut self) {
        for l in &mut self.lambda {
            if !(*l > 0.0) {
                *l = 0.0;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    /// Primal step size.
    pub alpha: f64,
    /// Penalty growth factor per outer cycle, > 1.
    pub phi: f64,
    pub mu0: f64,
    /// Penalty ceiling; growth stops here.
    pub mu_max: f64,
    /// Converged once successive gradient norms differ by less than this.
    pub grad_norm_delta_tol: f64,
    /// Primal iterations per call.
    pub max_inner_iters: usize,
    /// Primal iterations between multiplier updates.
    pub inner_per_outer: usize,
    /// Largest residual still counted as feasible.
    pub constraint_tol: f64,
    /// Planner loop rate, used by the remaining-time projection (Hz).
    pub loop_rate: f64,
    pub trace: bool,
}

impl Default for AlConfig {
    fn default() -> Self {
        Self {
            alpha: 0.005,
            phi: 1.5,
            mu0: 1.0,
            mu_max: 1.0e4,
            grad_norm_delta_tol: 0.05,
            max_inner_iters: 100,
            inner_per_outer: 10,
            constraint_tol: 1.0e-3,
            loop_rate: 200.0,
            trace: false,
        }
    }
}

impl AlConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.phi > 1.0
            && self.mu0 > 0.0
            && self.mu_max >= self.mu0
            && self.grad_norm_delta_tol > 0.0
            && self.constraint_tol > 0.0
            && self.loop_rate > 0.0
            && self.inner_per_outer > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid AL configuration: {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub max_residual: f64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,cost,grad_norm,max_residual")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.iteration, r.cost, r.grad_norm, r.max_residual)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub plan: FootstepPlan,
    pub mult: Multipliers,
    /// All residuals within the solver's feasibility tolerance.
    pub feasible: bool,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub cost: f64,
    pub max_violation: f64,
    pub diagnostic: Option<String>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

/// Projects a plan onto the simple bounds.
///
/// Future durations are clamped to `[t_lower, t_upper]` and each foothold to
/// the `l_max` disc around the CoM position predicted at its touchdown. The
/// remaining current-step time is only clamped from above: when it turns
/// negative it is set to `prev_remaining - 1 / loop_rate` instead, so the
/// switch happens on the next tick.
pub fn project_plan(
    plan: &FootstepPlan,
    prev_remaining: f64,
    spec: &ProblemSpec,
    loop_rate: f64,
) -> FootstepPlan {
    let lim = &spec.limits;
    let mut out = plan.clone();
    let n = out.horizon();

    if out.durations[0] < 0.0 {
        out.durations[0] = prev_remaining - 1.0 / loop_rate;
    }
    out.durations[0] = out.durations[0].min(lim.t_upper);
    for d in &mut out.durations[1..] {
        *d = d.clamp(lim.t_lower, lim.t_upper);
    }

    let omega = spec.params.omega();
    let mut state = spec.initial_state;
    for k in 0..n {
        let stance = spec.stance(&out, k);
        state = propagate_unchecked(&state, &stance, out.durations[k].max(0.0), omega);
        let offset = out.footholds[k].xy - state.pos;
        let dist = offset.norm();
        if dist > lim.l_max {
            out.footholds[k].xy = state.pos + offset * (lim.l_max / dist);
        }
    }
    out
}

/// Augmented Lagrangian solver with reusable trace storage.
#[derive(Clone, Debug, Default)]
pub struct AlSolver {
    pub config: AlConfig,
}

impl AlSolver {
    pub fn new(config: AlConfig) -> Self {
        Self { config }
    }

    pub fn solve(
        &self,
        spec: &ProblemSpec,
        init: &FootstepPlan,
        init_mult: &Multipliers,
    ) -> Result<SolveResult> {
        al_solve(spec, init, init_mult, &self.config)
    }
}

struct Candidate {
    plan: FootstepPlan,
    cost: f64,
    violation: f64,
    grad_norm: f64,
}

/// Runs projected gradient descent on the augmented Lagrangian.
///
/// Primal steps `x <- P(x - alpha dL/dx)`; after every `inner_per_outer`
/// steps `lambda <- lambda + mu max(0, c)` and `mu <- phi mu`. Stops when
/// successive gradient norms differ by less than `grad_norm_delta_tol` while
/// the projected gradient is small, or after `max_inner_iters` steps. The
/// lowest-cost feasible iterate is returned; otherwise the least violating
/// one, flagged infeasible.
pub fn al_solve(
    spec: &ProblemSpec,
    init: &FootstepPlan,
    init_mult: &Multipliers,
    cfg: &AlConfig,
) -> Result<SolveResult> {
    spec.check_plan(init)?;
    cfg.validate()?;
    let n = spec.horizon;
    let m = constraint_count(n);
    let mut mult = if init_mult.lambda.len() == m {
        init_mult.clone()
    } else {
        Multipliers::zeros(n, init_mult.mu)
    };
    mult.clamp_nonnegative();
    if !(mult.mu > 0.0) {
        mult.mu = cfg.mu0;
    }

    let prev_remaining = init.durations[0];
    let mut x = project_plan(init, prev_remaining, spec, cfg.loop_rate);
    let dur_offset = 2 * n;

    let mut best_feasible: Option<Candidate> = None;
    let mut best_infeasible: Option<Candidate> = None;
    let mut trace = Vec::new();
    let mut prev_gnorm: Option<f64> = None;
    let mut iterations = 0;
    let mut converged = false;

    'outer: loop {
        for _ in 0..cfg.inner_per_outer {
            let eval = lagrangian_eval(spec, &x, &mult);
            let mut g = eval.gradient;
            if !spec.adapt_timing {
                g[dur_offset..].iter_mut().for_each(|v| *v = 0.0);
            }
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let viol = max_violation(&eval.residuals);
            if !gnorm.is_finite() || !eval.cost.is_finite() {
                let plan = best_feasible
                    .or(best_infeasible)
                    .map_or_else(|| x.clone(), |c| c.plan);
                return Ok(SolveResult {
                    cost: crate::problem::cost(spec, &plan).unwrap_or(f64::NAN),
                    max_violation: crate::problem::constraint_values(spec, &plan)
                        .map(|c| max_violation(&c))
                        .unwrap_or(f64::NAN),
                    plan,
                    mult,
                    feasible: false,
                    converged: false,
                    iterations,
                    grad_norm: gnorm,
                    diagnostic: Some(format!(
                        "non-finite augmented Lagrangian gradient at iteration {iterations}"
                    )),
                    trace,
                });
            }
            if cfg.trace {
                trace.push(TraceRow {
                    iteration: iterations,
                    cost: eval.cost,
                    grad_norm: gnorm,
                    max_residual: viol,
                });
            }

            let cand = || Candidate {
                plan: x.clone(),
                cost: eval.cost,
                violation: viol,
                grad_norm: gnorm,
            };
            if viol <= cfg.constraint_tol {
                if best_feasible.as_ref().is_none_or(|b| eval.cost < b.cost) {
                    best_feasible = Some(cand());
                }
            } else if best_infeasible.as_ref().is_none_or(|b| viol < b.violation) {
                best_infeasible = Some(cand());
            }

            // Step, then check the stopping rule on the gradient mapping.
            let xv = x.to_vector();
            let trial: Vec<f64> = xv.iter().zip(&g).map(|(a, b)| a - cfg.alpha * b).collect();
            let mut next = x.clone();
            next.set_from_vector(&trial);
            let next = project_plan(&next, prev_remaining, spec, cfg.loop_rate);
            let mapping = next
                .to_vector()
                .iter()
                .zip(&xv)
                .map(|(a, b)| ((b - a) / cfg.alpha).powi(2))
                .sum::<f64>()
                .sqrt();

            if let Some(p) = prev_gnorm.replace(gnorm) {
                if (gnorm - p).abs() < cfg.grad_norm_delta_tol
                    && mapping <= 10.0 * cfg.grad_norm_delta_tol
                    && viol <= cfg.constraint_tol
                {
                    converged = true;
                    break 'outer;
                }
            }
            if iterations >= cfg.max_inner_iters {
                break 'outer;
            }
            x = next;
            iterations += 1;
        }
        let residuals = crate::problem::constraint_values(spec, &x)?;
        for (l, c) in mult.lambda.iter_mut().zip(&residuals) {
            *l += mult.mu * c.max(0.0);
        }
        mult.mu = (mult.mu * cfg.phi).min(cfg.mu_max);
    }

    let (chosen, feasible) = match (best_feasible, best_infeasible) {
        (Some(c), _) => (c, true),
        (None, Some(c)) => (c, false),
        (None, None) => unreachable!("at least one iterate is evaluated"),
    };
    Ok(SolveResult {
        plan: chosen.plan,
        mult,
        feasible,
        converged,
        iterations,
        grad_norm: match prev_gnorm {
            Some(g) if converged => g,
            _ => chosen.grad_norm,
        },
        cost: chosen.cost,
        max_violation: chosen.violation,
        diagnostic: None,
        trace,
    })
}

/// Value of the augmented Lagrangian for a plan, used by the solvers for
/// diagnostics.
pub fn lagrangian_value(spec: &ProblemSpec, plan: &FootstepPlan, mult: &Multipliers) -> Result<f64> {
    let states = crate::problem::rollout(spec, plan)?;
    let c = crate::problem::constraints_of_states(spec, plan, &states);
    Ok(al_value(crate::problem::cost_of_states(spec, &states), &c, mult))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lip::{LipState, Vec2};

    #[test]
    fn projection_identity_inside_bounds() {
        let spec = ProblemSpec::default();
        let plan = spec.nominal_plan(0.4);
        let p = project_plan(&plan, plan.durations[0], &spec, 200.0);
        assert_eq!(p, plan);
    }

    #[test]
    fn projection_clamps_future_durations() {
        let spec = ProblemSpec::default();
        let mut plan = spec.nominal_plan(0.4);
        plan.durations[1] = spec.limits.t_upper + 0.1;
        plan.durations[2] = 0.05;
        let p = project_plan(&plan, 0.4, &spec, 200.0);
        assert_eq!(p.durations[1], spec.limits.t_upper);
        assert_eq!(p.durations[2], spec.limits.t_lower);
    }

    #[test]
    fn negative_remaining_time_counts_down() {
        let spec = ProblemSpec::default();
        let mut plan = spec.nominal_plan(0.4);
        plan.durations[0] = -0.001;
        let p = project_plan(&plan, 0.003, &spec, 200.0);
        assert_eq!(p.durations[0], 0.003 - 0.005);
        assert!(p.durations[0] < 0.0);
    }

    #[test]
    fn foothold_pulled_into_reach() {
        let spec = ProblemSpec::default();
        let mut plan = spec.nominal_plan(0.4);
        plan.durations[0] = 0.0;
        plan.footholds[0].xy = Vec2::new(2.0, -0.1);
        let p = project_plan(&plan, 0.0, &spec, 200.0);
        let reach = (p.footholds[0].xy - spec.initial_state.pos).norm();
        assert!((reach - spec.limits.l_max).abs() < 1e-12);
    }

    #[test]
    fn multipliers_stay_nonnegative() {
        let mut spec = ProblemSpec::default();
        spec.initial_state = LipState::new(Vec2::new(0.0, -0.1), Vec2::new(0.0, -0.8));
        let plan = spec.nominal_plan(0.4);
        let cfg = AlConfig::default();
        let r = al_solve(&spec, &plan, &Multipliers::zeros(2, cfg.mu0), &cfg).unwrap();
        assert!(r.mult.lambda.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn penalty_grows_geometrically() {
        let mut spec = ProblemSpec::default();
        spec.initial_state = LipState::new(Vec2::new(0.0, -0.1), Vec2::new(0.0, -0.8));
        let plan = spec.nominal_plan(0.4);
        let mut cfg = AlConfig::default();
        cfg.grad_norm_delta_tol = 1e-12;
        cfg.max_inner_iters = 30;
        let r = al_solve(&spec, &plan, &Multipliers::zeros(2, 1.0), &cfg).unwrap();
        // 30 iterations complete three outer cycles before stopping.
        assert!((r.mult.mu - 1.5f64.powi(3)).abs() < 1e-12);
    }
}
