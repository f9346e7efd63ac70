//! Independent oracles: RK4 integration, finite differences, grid search.

use footstep_core::grad::lagrangian_gradient;
use footstep_core::problem::{augmented_lagrangian, constraint_layout, constraint_values, cost, ConstraintKind};
use footstep_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rk4(state: &LipState, foot: &Vec2, dt: f64, omega: f64) -> LipState {
    let f = |x: Vec2, v: Vec2| (v, (x - foot) * (omega * omega));
    let n = ((dt / 1e-3).ceil() as usize).max(1);
    let h = dt / n as f64;
    let (mut x, mut v) = (state.pos, state.vel);
    for _ in 0..n {
        let (k1x, k1v) = f(x, v);
        let (k2x, k2v) = f(x + k1x * (h / 2.0), v + k1v * (h / 2.0));
        let (k3x, k3v) = f(x + k2x * (h / 2.0), v + k2v * (h / 2.0));
        let (k4x, k4v) = f(x + k3x * h, v + k3v * h);
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
    }
    LipState::new(x, v)
}

#[test]
fn propagate_matches_rk4() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = LipParams::default();
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let s = LipState::new(
            Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
            Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        );
        let foot = Foothold::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let dt = rng.random_range(0.0..=1.0);
        let exact = propagate(&s, &foot, dt, &params).unwrap();
        let num = rk4(&s, &foot.xy, dt, params.omega());
        worst.0 = worst.0.max((exact.pos - num.pos).norm());
        worst.1 = worst.1.max((exact.vel - num.vel).norm());
    }
    assert!(worst.0 <= 1e-6 && worst.1 <= 1e-5, "worst errors {worst:?}");
}

fn random_spec(rng: &mut ChaCha8Rng) -> ProblemSpec {
    ProblemSpec {
        initial_state: LipState::new(
            Vec2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
            Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
        ),
        ref_velocity: Vec2::new(rng.random_range(-0.4..0.4), rng.random_range(-0.3..0.3)),
        support_side: if rng.random_bool(0.5) { SupportSide::Left } else { SupportSide::Right },
        step_elapsed: rng.random_range(0.0..0.1),
        ..ProblemSpec::default()
    }
}

fn random_plan(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> FootstepPlan {
    let mut plan = spec.nominal_plan(0.4);
    for f in &mut plan.footholds {
        f.xy += Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    }
    for d in &mut plan.durations {
        *d = rng.random_range(0.1..0.9);
    }
    plan
}

/// Random (spec, plan, multiplier) triple with every residual at least
/// `margin` away from zero.
fn away_from_boundaries(rng: &mut ChaCha8Rng, margin: f64) -> (ProblemSpec, FootstepPlan, Multipliers) {
    loop {
        let spec = random_spec(rng);
        let plan = random_plan(&spec, rng);
        let c = constraint_values(&spec, &plan).unwrap();
        if c.iter().all(|v| v.abs() > margin) {
            let mut mult = Multipliers::zeros(spec.horizon, rng.random_range(0.5..20.0));
            for l in &mut mult.lambda {
                *l = rng.random_range(0.0..5.0);
            }
            return (spec, plan, mult);
        }
    }
}

#[test]
fn lagrangian_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-4;
    for _ in 0..1000 {
        let (spec, plan, mult) = away_from_boundaries(&mut rng, 1e-3);
        let g = lagrangian_gradient(&spec, &plan, &mult).unwrap().to_vector();
        let x = plan.to_vector();
        for i in 0..x.len() {
            let eval = |d: f64| {
                let mut p = plan.clone();
                let mut v = x.clone();
                v[i] += d;
                p.set_from_vector(&v);
                augmented_lagrangian(&spec, &p, &mult).unwrap()
            };
            let fd = (8.0 * (eval(h) - eval(-h)) - (eval(2.0 * h) - eval(-2.0 * h))) / (12.0 * h);
            let err = (g[i] - fd).abs();
            assert!(
                err <= (1e-5 * fd.abs()).max(1e-8),
                "component {i}: analytic {} vs fd {fd}",
                g[i]
            );
        }
    }
}

/// With fixed timing and one future step the only decision is `u_1`.
/// The first case has an interior optimum; the second sits on the
/// no-crossing and velocity limits.
#[test]
fn reference_matches_grid_search_with_fixed_timing() {
    for (vel, ref_vx) in [(Vec2::new(0.1, -0.2), 0.2), (Vec2::new(0.2, 0.2), 0.6)] {
        let spec = ProblemSpec {
            horizon: 1,
            adapt_timing: false,
            initial_state: LipState::new(Vec2::zeros(), vel),
            ref_velocity: Vec2::new(ref_vx, 0.0),
            ..ProblemSpec::default()
        };
        let base = spec.nominal_plan(0.4);
        let eval = |u: Vec2| {
            let mut p = base.clone();
            p.footholds[0].xy = u;
            let feasible = constraint_values(&spec, &p).unwrap().iter().all(|c| *c <= 0.0);
            feasible.then(|| cost(&spec, &p).unwrap())
        };
        let search = |center: Vec2, half: f64, n: usize| {
            let mut best = (f64::INFINITY, center);
            for i in 0..=n {
                for j in 0..=n {
                    let t = |k: usize| -half + 2.0 * half * k as f64 / n as f64;
                    let u = center + Vec2::new(t(i), t(j));
                    if let Some(c) = eval(u) {
                        if c < best.0 {
                            best = (c, u);
                        }
                    }
                }
            }
            best
        };
        let mut best = search(Vec2::zeros(), 1.0, 400);
        let mut half = 0.01;
        for _ in 0..4 {
            best = search(best.1, half, 100);
            half /= 20.0;
        }
        assert!(best.0.is_finite());

        let warm = WarmStart::new(base.clone(), spec.current_support, 0.0, 0);
        let res = ref_solve(&spec, &warm, &RefConfig::default()).unwrap();
        assert!(res.feasible);
        let c = cost(&spec, &res.plan).unwrap();
        assert!(c <= best.0 + 1e-7, "reference {c} vs grid {}", best.0);
        assert!((res.plan.footholds[0].xy - best.1).norm() < 1e-3);
        assert_eq!(res.plan.durations, base.durations);
    }
}

#[test]
fn al_leaves_unconstrained_optimum_unchanged() {
    // Fixed timing makes the cost quadratic in the footholds; this start has
    // its minimizer strictly inside every constraint.
    let spec = ProblemSpec {
        adapt_timing: false,
        initial_state: LipState::new(Vec2::zeros(), Vec2::new(0.2, -0.2)),
        ref_velocity: Vec2::new(0.2, 0.0),
        ..ProblemSpec::default()
    };
    let optimum = ref_solve(
        &spec,
        &WarmStart::new(spec.nominal_plan(0.4), spec.current_support, 0.0, 0),
        &RefConfig::default(),
    )
    .unwrap();
    let c = constraint_values(&spec, &optimum.plan).unwrap();
    assert!(c.iter().all(|v| *v < -1e-3), "optimum touches a constraint");
    let res = al_solve(&spec, &optimum.plan, &Multipliers::zeros(spec.horizon, 1.0), &AlConfig::default()).unwrap();
    assert!(res.feasible);
    assert!(res.iterations <= 5, "{} iterations", res.iterations);
    assert!(res.plan.max_abs_diff(&optimum.plan) <= 1e-6);
}

#[test]
fn al_matches_reference_when_run_to_convergence() {
    let spec = ProblemSpec::default();
    let mut init = spec.nominal_plan(0.4);
    init.footholds[0].xy.x += 0.05;
    init.footholds[1].xy.y += 0.03;
    init.durations[1] = 0.5;
    let reference = ref_solve(&spec, &WarmStart::new(init.clone(), spec.current_support, 0.0, 0), &RefConfig::default()).unwrap();
    let cfg = AlConfig {
        grad_norm_delta_tol: 0.01,
        ..AlConfig::default()
    };
    let res = al_solve(&spec, &init, &Multipliers::zeros(spec.horizon, 1.0), &cfg).unwrap();
    assert!(res.feasible);
    let (ca, cr) = (cost(&spec, &res.plan).unwrap(), cost(&spec, &reference.plan).unwrap());
    assert!((ca - cr).abs() <= 0.02 * cr, "al {ca} vs reference {cr}");
}

#[test]
fn al_clips_unreachable_reference_velocity() {
    let spec = ProblemSpec {
        ref_velocity: Vec2::new(1.5, 0.0),
        ..ProblemSpec::default()
    };
    let cfg = AlConfig::default();
    let res = al_solve(&spec, &spec.nominal_plan(0.4), &Multipliers::zeros(spec.horizon, 1.0), &cfg).unwrap();
    let c = constraint_values(&spec, &res.plan).unwrap();
    for (v, kind) in c.iter().zip(constraint_layout(spec.horizon)) {
        if matches!(kind, ConstraintKind::NextStepLength(_) | ConstraintKind::CurrentStepLength(_)) {
            assert!(*v <= cfg.constraint_tol, "{kind:?} = {v}");
        }
    }
}

#[test]
fn reference_never_worse_than_al_on_random_pushes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let dv: f64 = rng.random_range(0.0..0.6);
        let spec = ProblemSpec {
            initial_state: LipState::new(
                Vec2::new(rng.random_range(-0.03..0.03), rng.random_range(-0.06..0.0)),
                Vec2::new(dir.cos() * dv, dir.sin() * dv + rng.random_range(-0.2..0.2)),
            ),
            ref_velocity: Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.2)),
            step_elapsed: rng.random_range(0.0..0.1),
            ..ProblemSpec::default()
        };
        let init = spec.nominal_plan(0.4);
        let al = al_solve(&spec, &init, &Multipliers::zeros(spec.horizon, 1.0), &AlConfig::default()).unwrap();
        let rf = ref_solve(&spec, &WarmStart::new(init, spec.current_support, 0.0, 0), &RefConfig::default()).unwrap();
        assert!(rf.feasible);
        if al.feasible {
            assert!(cost(&spec, &rf.plan).unwrap() <= cost(&spec, &al.plan).unwrap() + 1e-6);
        }
    }
}

#[test]
fn reference_keeps_an_unconstrained_optimum() {
    let spec = ProblemSpec {
        adapt_timing: false,
        initial_state: LipState::new(Vec2::zeros(), Vec2::new(0.2, -0.2)),
        ref_velocity: Vec2::new(0.2, 0.0),
        ..ProblemSpec::default()
    };
    let warm = WarmStart::new(spec.nominal_plan(0.4), spec.current_support, 0.0, 0);
    let first = ref_solve(&spec, &warm, &RefConfig::default()).unwrap();
    let again = ref_solve(&spec, &WarmStart::new(first.plan.clone(), spec.current_support, 0.0, 0), &RefConfig::default()).unwrap();
    assert!(again.feasible);
    assert!(again.plan.max_abs_diff(&first.plan) <= 1e-8);
}
