//! Two-rate planner: a fast augmented Lagrangian loop seeded by a slower
//! interior-point reference loop through a snapshot mailbox.

use std::io::Write;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::al::{al_solve, AlConfig, Multipliers};
use crate::error::{Error, Result};
use crate::lip::{Foothold, LipState};
use crate::mailbox::Mailbox;
use crate::problem::{constraint_values, max_violation, FootstepPlan, ProblemSpec, SupportSide};
use crate::reference::{ref_solve, shift_warm_start, RefConfig, WarmStart};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMode {
    /// Fast AL loop seeded by the reference solver.
    ArtoAl,
    /// Fast loop alone.
    AlOnly,
    /// Reference solutions only, held between solves.
    RefOnly,
    /// Same as `ArtoAl` with every duration frozen at the nominal value.
    NoTimeAdp,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 4] = [
        PlannerMode::ArtoAl,
        PlannerMode::AlOnly,
        PlannerMode::RefOnly,
        PlannerMode::NoTimeAdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerMode::ArtoAl => "arto-al",
            PlannerMode::AlOnly => "al-only",
            PlannerMode::RefOnly => "ref-only",
            PlannerMode::NoTimeAdp => "no-time-adp",
        }
    }

    fn uses_fast(self) -> bool {
        self != PlannerMode::RefOnly
    }

    fn uses_reference(self) -> bool {
        self != PlannerMode::AlOnly
    }
}

impl std::str::FromStr for PlannerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PlannerMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown planner mode `{s}`")))
    }
}

impl std::fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSource {
    Fast,
    Reference,
}

impl PlanSource {
    pub fn name(self) -> &'static str {
        match self {
            PlanSource::Fast => "fast",
            PlanSource::Reference => "reference",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerOutput {
    pub plan: FootstepPlan,
    pub source: PlanSource,
    pub timestamp: f64,
    pub feasible: bool,
}

/// What the planner sees at each tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerInput {
    pub time: f64,
    pub state: LipState,
    pub support: Foothold,
    pub side: SupportSide,
    /// Time spent on the current support (s).
    pub elapsed: f64,
    /// Number of support switches so far.
    pub step_index: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    /// Treat every fast solve as infeasible.
    pub fast_infeasible: bool,
    /// The reference loop never publishes.
    pub stall_reference: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub mode: PlannerMode,
    pub al: AlConfig,
    pub reference: RefConfig,
    pub fast_rate: f64,
    pub reference_rate: f64,
    /// Step duration used for initial plans and frozen timing (s).
    pub nominal_step_time: f64,
    /// Run the reference loop on a worker thread. Episodes then run in
    /// real time.
    pub threaded: bool,
    pub faults: FaultInjection,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mode: PlannerMode::ArtoAl,
            al: AlConfig::default(),
            reference: RefConfig::default(),
            fast_rate: 200.0,
            reference_rate: 20.0,
            nominal_step_time: 0.4,
            threaded: false,
            faults: FaultInjection::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        self.al.validate()?;
        let ok = |r: f64| r.is_finite() && r > 0.0;
        if !ok(self.fast_rate) || !ok(self.reference_rate) || self.reference_rate > self.fast_rate {
            return Err(Error::Config(format!(
                "loop rates must satisfy 0 < reference ({}) <= fast ({})",
                self.reference_rate, self.fast_rate
            )));
        }
        if !ok(self.nominal_step_time) {
            return Err(Error::Config("nominal step time must be > 0".into()));
        }
        Ok(())
    }

    /// Fast ticks per reference solve.
    pub fn reference_every(&self) -> u64 {
        ((self.fast_rate / self.reference_rate).round() as u64).max(1)
    }
}

#[derive(Serialize)]
struct LatencyRecord {
    tick: u64,
    source: &'static str,
    feasible: bool,
    latency_us: f64,
    iterations: usize,
}

struct Worker {
    jobs: Option<Sender<(ProblemSpec, PlannerInput)>>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.jobs.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Brings a warm start to the time and step index of `input`.
pub fn advance_warm_start(ws: &WarmStart, input: &PlannerInput) -> WarmStart {
    let mut w = ws.clone();
    if w.step_index < input.step_index {
        while w.step_index < input.step_index {
            let dt0 = w.plan.durations[0].max(0.0);
            w = shift_warm_start(&w, dt0, true);
        }
        w.support = input.support;
        w.wall_time = input.time - input.elapsed;
        w = shift_warm_start(&w, input.elapsed, false);
    } else {
        w = shift_warm_start(&w, input.time - w.wall_time, false);
    }
    w.wall_time = input.time;
    w
}

struct ReferenceLoop {
    cfg: PlannerConfig,
    mailbox: Arc<Mailbox<WarmStart>>,
    last: Option<WarmStart>,
}

impl ReferenceLoop {
    fn run(&mut self, spec: &ProblemSpec, input: &PlannerInput, fast_plan: Option<&FootstepPlan>) {
        if self.cfg.faults.stall_reference {
            return;
        }
        let mut warm = match (&self.last, fast_plan) {
            (Some(prev), _) => advance_warm_start(prev, input),
            (None, Some(p)) => WarmStart::new(p.clone(), input.support, input.time, input.step_index),
            (None, None) => WarmStart::new(
                spec.nominal_plan(self.cfg.nominal_step_time),
                input.support,
                input.time,
                input.step_index,
            ),
        };
        if !spec.adapt_timing {
            warm.plan.durations = frozen_durations(spec, self.cfg.nominal_step_time);
        }
        let Ok(res) = ref_solve(spec, &warm, &self.cfg.reference) else {
            return;
        };
        if !res.feasible {
            return;
        }
        let ws = WarmStart {
            plan: res.plan,
            mult: res.mult,
            wall_time: input.time,
            step_index: input.step_index,
            support: input.support,
        };
        self.last = Some(ws.clone());
        self.mailbox.publish(ws);
    }
}

fn frozen_durations(spec: &ProblemSpec, nominal: f64) -> Vec<f64> {
    let mut d = vec![nominal; spec.horizon + 1];
    d[0] = (nominal - spec.step_elapsed).max(0.0);
    d
}

pub struct Planner {
    base: ProblemSpec,
    cfg: PlannerConfig,
    mailbox: Arc<Mailbox<WarmStart>>,
    consumed_version: u64,
    reference: Option<ReferenceLoop>,
    worker: Option<Worker>,
    plan: Option<FootstepPlan>,
    plan_step: u64,
    mult: Multipliers,
    initial_mult: Multipliers,
    ticks: u64,
    latency_log: Option<Box<dyn Write + Send>>,
}

impl Planner {
    /// `base` supplies weights, limits, pendulum constants and horizon;
    /// state and support fields are overwritten at every tick.
    pub fn new(base: ProblemSpec, cfg: PlannerConfig) -> Result<Self> {
        base.validate()?;
        cfg.validate()?;
        let mailbox = Arc::new(Mailbox::new());
        let reference_loop = ReferenceLoop {
            cfg: cfg.clone(),
            mailbox: Arc::clone(&mailbox),
            last: None,
        };
        let (reference, worker) = if !cfg.mode.uses_reference() {
            (None, None)
        } else if cfg.threaded {
            let (tx, rx): (Sender<(ProblemSpec, PlannerInput)>, Receiver<_>) = mpsc::channel();
            let mut lp = reference_loop;
            let handle = std::thread::spawn(move || {
                while let Ok(mut job) = rx.recv() {
                    // Only the newest pending request matters.
                    while let Ok(newer) = rx.try_recv() {
                        job = newer;
                    }
                    lp.run(&job.0, &job.1, None);
                }
            });
            (
                None,
                Some(Worker {
                    jobs: Some(tx),
                    handle: Some(handle),
                }),
            )
        } else {
            (Some(reference_loop), None)
        };
        let mult = Multipliers::zeros(base.horizon, cfg.al.mu0);
        Ok(Self {
            base,
            mailbox,
            consumed_version: 0,
            reference,
            worker,
            plan: None,
            plan_step: 0,
            initial_mult: mult.clone(),
            mult,
            ticks: 0,
            latency_log: None,
            cfg,
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn set_faults(&mut self, faults: FaultInjection) {
        self.cfg.faults = faults;
        if let Some(r) = &mut self.reference {
            r.cfg.faults = faults;
        }
    }

    /// Writes one JSON line per fast tick.
    pub fn set_latency_log(&mut self, out: Box<dyn Write + Send>) {
        self.latency_log = Some(out);
    }

    pub fn mailbox(&self) -> &Arc<Mailbox<WarmStart>> {
        &self.mailbox
    }

    /// Multipliers the most recent fast solve started from.
    pub fn initial_multipliers(&self) -> &Multipliers {
        &self.initial_mult
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Reference ticks follow the fast tick counter: every
    /// `reference_every` fast ticks, starting with the first.
    pub fn reference_due(&self) -> bool {
        self.ticks % self.cfg.reference_every() == 0
    }

    pub fn spec_for(&self, input: &PlannerInput) -> ProblemSpec {
        ProblemSpec {
            initial_state: input.state,
            current_support: input.support,
            support_side: input.side,
            step_elapsed: input.elapsed,
            adapt_timing: self.cfg.mode != PlannerMode::NoTimeAdp,
            ..self.base.clone()
        }
    }

    /// Runs the reference solver and publishes a feasible result.
    pub fn tick_reference(&mut self, input: &PlannerInput) {
        let spec = self.spec_for(input);
        if let Some(r) = &mut self.reference {
            r.run(&spec, input, self.plan.as_ref());
        } else if let Some(w) = &self.worker {
            if let Some(tx) = &w.jobs {
                let _ = tx.send((spec, *input));
            }
        }
    }

    /// Deterministic interleaving: a reference tick when due, then a fast
    /// tick.
    pub fn step(&mut self, input: &PlannerInput) -> Result<PlannerOutput> {
        if self.cfg.mode.uses_reference() && self.reference_due() {
            self.tick_reference(input);
        }
        self.tick_fast(input)
    }

    /// Latest reference plan brought to the current time, with its worst
    /// constraint residual on the current problem.
    fn reference_output(&self, input: &PlannerInput) -> Option<(PlannerOutput, f64)> {
        let (_, ws) = self.mailbox.latest()?;
        let spec = self.spec_for(input);
        let mut w = advance_warm_start(&ws, input);
        if self.cfg.mode == PlannerMode::NoTimeAdp {
            w.plan.durations = frozen_durations(&spec, self.cfg.nominal_step_time);
        }
        let viol = constraint_values(&spec, &w.plan).map_or(f64::INFINITY, |c| max_violation(&c));
        Some((
            PlannerOutput {
                plan: w.plan,
                source: PlanSource::Reference,
                timestamp: input.time,
                feasible: viol <= self.cfg.al.constraint_tol,
            },
            viol,
        ))
    }

    fn log(&mut self, source: PlanSource, feasible: bool, started: Instant, iterations: usize) {
        if let Some(out) = &mut self.latency_log {
            let rec = LatencyRecord {
                tick: self.ticks,
                source: source.name(),
                feasible,
                latency_us: started.elapsed().as_secs_f64() * 1e6,
                iterations,
            };
            if let Ok(line) = serde_json::to_string(&rec) {
                let _ = writeln!(out, "{line}");
            }
        }
    }

    /// One fast-loop tick.
    pub fn tick_fast(&mut self, input: &PlannerInput) -> Result<PlannerOutput> {
        let started = Instant::now();
        let spec = self.spec_for(input);
        spec.validate()?;
        self.ticks += 1;

        if !self.cfg.mode.uses_fast() {
            let (out, _) = self.reference_output(input).ok_or(Error::NotReady)?;
            self.log(out.source, out.feasible, started, 0);
            return Ok(out);
        }

        // Carry the previous plan across support switches.
        if let Some(plan) = &self.plan {
            if self.plan_step < input.step_index {
                let ws = WarmStart {
                    plan: plan.clone(),
                    mult: self.mult.clone(),
                    wall_time: input.time,
                    step_index: self.plan_step,
                    support: input.support,
                };
                let mut prev = ws;
                while prev.step_index < input.step_index {
                    let dt0 = prev.plan.durations[0].max(0.0);
                    prev = shift_warm_start(&prev, dt0, true);
                }
                prev = shift_warm_start(&prev, input.elapsed, false);
                self.plan = Some(prev.plan);
                self.mult = prev.mult;
            }
        }
        self.plan_step = input.step_index;

        let version = self.mailbox.version();
        if version > self.consumed_version {
            if let Some((v, ws)) = self.mailbox.latest() {
                let w = advance_warm_start(&ws, input);
                self.plan = Some(w.plan);
                self.mult.lambda = ws.mult.lambda.clone();
                self.consumed_version = v;
            }
        }

        let mut init = self
            .plan
            .clone()
            .unwrap_or_else(|| spec.nominal_plan(self.cfg.nominal_step_time));
        if !spec.adapt_timing {
            init.durations = frozen_durations(&spec, self.cfg.nominal_step_time);
        }
        self.mult.mu = self.cfg.al.mu0;
        self.initial_mult = self.mult.clone();
        let res = al_solve(&spec, &init, &self.mult, &self.cfg.al)?;
        let feasible = res.feasible && !self.cfg.faults.fast_infeasible;
        if res.plan.is_finite() {
            self.plan = Some(res.plan.clone());
            self.mult = res.mult.clone();
        }

        // A stale reference plan is only worth emitting when it violates the
        // current constraints less than the fast plan does.
        let fast_viol = if self.cfg.faults.fast_infeasible {
            f64::INFINITY
        } else {
            res.max_violation
        };
        let fallback = if feasible {
            None
        } else {
            self.reference_output(input)
                .filter(|(_, v)| *v <= fast_viol.max(self.cfg.al.constraint_tol))
        };
        let out = if feasible {
            PlannerOutput {
                plan: res.plan,
                source: PlanSource::Fast,
                timestamp: input.time,
                feasible: true,
            }
        } else if let Some((out, _)) = fallback {
            out
        } else if res.plan.is_finite() {
            PlannerOutput {
                plan: res.plan,
                source: PlanSource::Fast,
                timestamp: input.time,
                feasible: false,
            }
        } else {
            self.log(PlanSource::Fast, false, started, res.iterations);
            return Err(Error::NotReady);
        };
        self.log(out.source, out.feasible, started, res.iterations);
        Ok(out)
    }
}
