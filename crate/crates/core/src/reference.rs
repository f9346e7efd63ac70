//! High-accuracy reference solver and warm-start bookkeeping.
//!
//! The solver is a small dense primal-dual interior-point method on the
//! slack reformulation `c(z) + s = 0, s >= 0` with a Fiacco-McCormick
//! barrier schedule. The Lagrangian Hessian is assembled from central
//! differences of the analytical gradients, which is exact enough for
//! Newton steps at this size (7 variables, 17 inequalities at N = 2).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::al::{Multipliers, SolveResult};
use crate::error::Result;
use crate::grad::{constraint_jacobian_vec, cost_gradient_vec, sensitivities_unchecked};
use crate::lip::{Foothold, Vec2};
use crate::problem::{
    constraint_count, constraints_of_states, cost_of_states, max_violation, FootstepPlan,
    ProblemSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefConfig {
    pub max_iters: usize,
    /// Stationarity tolerance (inf-norm of the Lagrangian gradient).
    pub stationarity_tol: f64,
    /// Primal feasibility and complementarity tolerance.
    pub feasibility_tol: f64,
    pub initial_barrier: f64,
    /// Central-difference step for the Hessian.
    pub hessian_step: f64,
}

impl Default for RefConfig {
    fn default() -> Self {
        Self {
            max_iters: 150,
            stationarity_tol: 1e-6,
            feasibility_tol: 1e-8,
            initial_barrier: 1e-2,
            hessian_step: 1e-6,
        }
    }
}

/// Plan and multipliers carried between reference solves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub plan: FootstepPlan,
    pub mult: Multipliers,
    /// Time the plan refers to (s).
    pub wall_time: f64,
    /// Number of support switches seen when the plan was made.
    pub step_index: u64,
    /// Stance foot the plan was made for.
    pub support: Foothold,
}

impl WarmStart {
    pub fn new(plan: FootstepPlan, support: Foothold, wall_time: f64, step_index: u64) -> Self {
        let mult = Multipliers::zeros(plan.horizon(), 1.0);
        Self {
            plan,
            mult,
            wall_time,
            step_index,
            support,
        }
    }
}

/// Advances a warm start by `elapsed` seconds.
///
/// Without a step only the remaining time shrinks. After a step the plan
/// moves up by one phase and the last foothold repeats the previous
/// displacement mirrored in `y`.
pub fn shift_warm_start(prev: &WarmStart, elapsed: f64, step_taken: bool) -> WarmStart {
    let elapsed = elapsed.max(0.0);
    let mut next = prev.clone();
    next.wall_time = prev.wall_time + elapsed;
    if !step_taken {
        next.plan.durations[0] = prev.plan.durations[0] - elapsed;
        return next;
    }

    let old = &prev.plan;
    let n = old.horizon();
    let prior = |k: usize| {
        if k == 0 {
            prev.support
        } else {
            old.footholds[k - 1]
        }
    };
    let mut footholds: Vec<Foothold> = (1..n).map(|k| old.footholds[k]).collect();
    let last = old.footholds[n - 1];
    let before_last = prior(n - 1);
    let disp = last.xy - before_last.xy;
    let mirrored = Vec2::new(disp.x, -disp.y);
    footholds.push(Foothold::with_z(last.xy + mirrored, last.z));

    let mut durations = Vec::with_capacity(n + 1);
    let into_new_step = (elapsed - old.durations[0]).max(0.0);
    durations.push(old.durations[1] - into_new_step);
    durations.extend_from_slice(&old.durations[2..]);
    durations.push(old.durations[n]);

    next.support = old.footholds[0];
    next.plan = FootstepPlan {
        footholds,
        durations,
    };
    next.step_index = prev.step_index + 1;
    next.mult = Multipliers::zeros(n, prev.mult.mu);
    next
}

/// Problem in terms of the free variables only.
struct Reduced<'a> {
    spec: &'a ProblemSpec,
    base: FootstepPlan,
    free: Vec<usize>,
    /// Index of `dt_0` among the free variables, bounded below by zero.
    dt0: Option<usize>,
    m: usize,
}

struct Point {
    f: f64,
    grad: DVector<f64>,
    c: DVector<f64>,
    jac: DMatrix<f64>,
}

impl<'a> Reduced<'a> {
    fn new(spec: &'a ProblemSpec, base: FootstepPlan) -> Self {
        let n = base.horizon();
        let free: Vec<usize> = if spec.adapt_timing {
            (0..3 * n + 1).collect()
        } else {
            (0..2 * n).collect()
        };
        let dt0 = spec.adapt_timing.then_some(2 * n);
        let m = constraint_count(n) + usize::from(dt0.is_some());
        Self {
            spec,
            base,
            free,
            dt0,
            m,
        }
    }

    fn plan(&self, z: &DVector<f64>) -> FootstepPlan {
        let mut v = self.base.to_vector();
        for (i, &idx) in self.free.iter().enumerate() {
            v[idx] = z[i];
        }
        let mut p = self.base.clone();
        p.set_from_vector(&v);
        p
    }

    fn start(&self) -> DVector<f64> {
        let v = self.base.to_vector();
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| v[i]))
    }

    fn eval(&self, z: &DVector<f64>, with_jac: bool) -> Point {
        let plan = self.plan(z);
        let sens = sensitivities_unchecked(self.spec, &plan);
        let f = cost_of_states(self.spec, &sens.states);
        let mut c: Vec<f64> = constraints_of_states(self.spec, &plan, &sens.states);
        if self.dt0.is_some() {
            c.push(-plan.durations[0]);
        }
        let nz = self.free.len();
        let (grad, jac) = if with_jac {
            let g_full = cost_gradient_vec(self.spec, &sens);
            let j_full = constraint_jacobian_vec(self.spec, &plan, &sens);
            let grad = DVector::from_iterator(nz, self.free.iter().map(|&i| g_full[i]));
            let mut jac = DMatrix::zeros(self.m, nz);
            for (r, row) in j_full.iter().enumerate() {
                for (col, &i) in self.free.iter().enumerate() {
                    jac[(r, col)] = row[i];
                }
            }
            if let Some(col) = self.dt0 {
                jac[(self.m - 1, col)] = -1.0;
            }
            (grad, jac)
        } else {
            (DVector::zeros(0), DMatrix::zeros(0, 0))
        };
        Point {
            f,
            grad,
            c: DVector::from_vec(c),
            jac,
        }
    }

    fn lagrangian_grad(&self, z: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let p = self.eval(z, true);
        &p.grad + p.jac.transpose() * y
    }

    fn hessian(&self, z: &DVector<f64>, y: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let nz = z.len();
        let mut hess = DMatrix::zeros(nz, nz);
        for i in 0..nz {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let col = (self.lagrangian_grad(&zp, y) - self.lagrangian_grad(&zm, y)) / (2.0 * h);
            hess.set_column(i, &col);
        }
        (&hess + hess.transpose()) * 0.5
    }
}

fn merit(p: &Point, s: &DVector<f64>, barrier: f64, nu: f64) -> f64 {
    p.f - barrier * s.iter().map(|v| v.ln()).sum::<f64>() + nu * (&p.c + s).lp_norm(1)
}

/// Per-row slack choice between the trial value and `-c` (when positive),
/// whichever gives the lower merit contribution.
fn reset_slacks(s: &DVector<f64>, c: &DVector<f64>, barrier: f64, nu: f64) -> DVector<f64> {
    let row = |si: f64, ci: f64| -barrier * si.ln() + nu * (ci + si).abs();
    DVector::from_iterator(
        s.len(),
        s.iter().zip(c.iter()).map(|(&si, &ci)| {
            if -ci > 0.0 && row(-ci, ci) < row(si, ci) {
                -ci
            } else {
                si
            }
        }),
    )
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>, tau: f64) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -tau * x / d)
        .fold(1.0, f64::min)
}

/// Solves the footstep problem to tight tolerance from a warm start.
pub fn ref_solve(spec: &ProblemSpec, warm: &WarmStart, cfg: &RefConfig) -> Result<SolveResult> {
    spec.check_plan(&warm.plan)?;
    let problem = Reduced::new(spec, warm.plan.clone());
    let m = problem.m;
    let n_con = constraint_count(spec.horizon);

    let mut z = problem.start();
    let mut point = problem.eval(&z, true);
    let mut barrier = cfg.initial_barrier;
    let mut s = point.c.map(|c| (-c).max(1e-2));
    let mut y = DVector::from_iterator(m, s.iter().map(|si| barrier / si));
    if warm.mult.lambda.len() == n_con {
        for (yi, &l) in y.iter_mut().zip(&warm.mult.lambda) {
            *yi = yi.max(l);
        }
    }
    let mut nu: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut diagnostic = None;
    let mut stationarity = f64::INFINITY;

    while iterations < cfg.max_iters {
        let r_d = &point.grad + point.jac.transpose() * &y;
        let r_p = &point.c + &s;
        stationarity = r_d.amax();
        let comp = s.component_mul(&y);
        let primal_viol = point.c.iter().fold(0.0f64, |a, &c| a.max(c));
        if stationarity <= cfg.stationarity_tol
            && r_p.amax() <= cfg.feasibility_tol
            && primal_viol <= cfg.feasibility_tol
            && comp.amax() <= cfg.feasibility_tol
        {
            converged = true;
            break;
        }
        let barrier_err = stationarity
            .max(r_p.amax())
            .max(comp.map(|v| v - barrier).amax());
        if barrier_err <= 10.0 * barrier && barrier > cfg.feasibility_tol / 100.0 {
            barrier = (cfg.feasibility_tol / 100.0).max((0.2 * barrier).min(barrier.powf(1.5)));
            continue;
        }

        let r_c = comp.map(|v| v - barrier);
        let sigma = y.component_div(&s);
        let hess = problem.hessian(&z, &y, cfg.hessian_step);
        let jt = point.jac.transpose();
        let mut scaled = point.jac.clone();
        for (r, mut row) in scaled.row_iter_mut().enumerate() {
            row *= sigma[r];
        }
        let k0 = &hess + &jt * &scaled;
        let aux = (&r_c - y.component_mul(&r_p)).component_div(&s);
        let rhs = -&r_d + &jt * &aux;

        let mut delta = 0.0;
        let dz = loop {
            let mut kmat = k0.clone();
            for i in 0..kmat.nrows() {
                kmat[(i, i)] += delta;
            }
            if let Some(ch) = kmat.cholesky() {
                break ch.solve(&rhs);
            }
            delta = if delta == 0.0 { 1e-6 } else { delta * 10.0 };
            if delta > 1e8 {
                diagnostic = Some("could not regularize the Newton system".into());
                break DVector::zeros(z.len());
            }
        };
        if diagnostic.is_some() {
            break;
        }
        let jdz = &point.jac * &dz;
        let ds = -&r_p - &jdz;
        let dy = (y.component_mul(&r_p) - &r_c).component_div(&s) + sigma.component_mul(&jdz);

        let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !(finite(&dz) && finite(&ds) && finite(&dy)) {
            diagnostic = Some("non-finite Newton step".into());
            break;
        }
        let tau = (1.0 - barrier).max(0.99);
        let alpha_max = max_step(&s, &ds, tau);
        let alpha_y = max_step(&y, &dy, tau);

        nu = nu.max((&y + &dy).amax() + 1.0);
        let phi0 = merit(&point, &s, barrier, nu);
        let dphi = point.grad.dot(&dz)
            - barrier * ds.component_div(&s).sum()
            - nu * r_p.lp_norm(1);
        let mut alpha = alpha_max;
        let mut accepted = None;
        for _ in 0..40 {
            let z_try = &z + &dz * alpha;
            let p_try = problem.eval(&z_try, false);
            let s_try = reset_slacks(&(&s + &ds * alpha), &p_try.c, barrier, nu);
            if p_try.f.is_finite() && merit(&p_try, &s_try, barrier, nu) <= phi0 + 1e-4 * alpha * dphi.min(0.0) {
                accepted = Some((z_try, s_try));
                break;
            }
            alpha *= 0.5;
        }
        let (z_new, s_new) = accepted.unwrap_or_else(|| (&z + &dz * alpha, &s + &ds * alpha));
        z = z_new;
        s = s_new;
        y += &dy * alpha_y;
        // Keep the duals near the central path.
        for i in 0..m {
            let lo = barrier / (1e10 * s[i]);
            let hi = 1e10 * barrier / s[i];
            y[i] = y[i].clamp(lo, hi.max(lo));
        }
        point = problem.eval(&z, true);
        iterations += 1;
        if !point.f.is_finite() {
            diagnostic = Some("non-finite cost during reference solve".into());
            break;
        }
    }

    let plan = problem.plan(&z);
    let residuals = crate::problem::constraint_values(spec, &plan)?;
    let viol = max_violation(&residuals);
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("reference solve hit {} iterations", cfg.max_iters));
    }
    let lambda: Vec<f64> = y.iter().take(n_con).map(|v| v.max(0.0)).collect();
    Ok(SolveResult {
        cost: point.f,
        plan,
        mult: Multipliers {
            lambda,
            mu: warm.mult.mu.max(f64::MIN_POSITIVE),
        },
        feasible: converged && viol <= 1e-6,
        converged,
        iterations,
        grad_norm: stationarity,
        max_violation: viol,
        diagnostic,
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lip::LipState;

    fn warm(spec: &ProblemSpec) -> WarmStart {
        WarmStart::new(spec.nominal_plan(0.4), spec.current_support, 0.0, 0)
    }

    #[test]
    fn shift_without_step_or_time_is_identity() {
        let spec = ProblemSpec::default();
        let w = warm(&spec);
        assert_eq!(shift_warm_start(&w, 0.0, false), w);
    }

    #[test]
    fn shift_reduces_remaining_time() {
        let spec = ProblemSpec::default();
        let w = warm(&spec);
        let s = shift_warm_start(&w, 0.05, false);
        assert_eq!(s.plan.durations[0], w.plan.durations[0] - 0.05);
        assert_eq!(s.plan.footholds, w.plan.footholds);
    }

    #[test]
    fn step_mirrors_last_displacement() {
        let spec = ProblemSpec::default();
        let mut w = warm(&spec);
        w.plan.footholds = vec![Foothold::new(0.2, 0.1), Foothold::new(0.4, -0.1)];
        let s = shift_warm_start(&w, 0.0, true);
        assert_eq!(s.plan.footholds[0].xy, Vec2::new(0.4, -0.1));
        assert!((s.plan.footholds[1].xy - Vec2::new(0.6, 0.1)).norm() < 1e-15);
        assert_eq!(s.step_index, 1);
        assert_eq!(s.support.xy, Vec2::new(0.2, 0.1));
    }

    #[test]
    fn reference_solve_is_feasible() {
        let mut spec = ProblemSpec::default();
        spec.initial_state = LipState::new(Vec2::new(0.0, -0.05), Vec2::new(0.05, 0.3));
        let r = ref_solve(&spec, &warm(&spec), &RefConfig::default()).unwrap();
        assert!(r.converged, "{:?}", r.diagnostic);
        assert!(r.max_violation <= 1e-6);
    }
}
