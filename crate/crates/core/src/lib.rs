//! Footstep location and timing optimization on the linear inverted
//! pendulum, with a fast augmented Lagrangian solver, an interior-point
//! reference solver, and a closed-loop simulation harness.

pub mod al;
pub mod cli;
pub mod config;
pub mod error;
pub mod grad;
pub mod lip;
pub mod mailbox;
pub mod planner;
pub mod problem;
pub mod reference;
pub mod sim;
pub mod swing;
pub mod terrain;

pub use al::{al_solve, project_plan, AlConfig, AlSolver, Multipliers, SolveResult};
pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use lip::{propagate, propagate_derivatives, Foothold, LipParams, LipState, Vec2};
pub use planner::{Planner, PlannerConfig, PlannerInput, PlannerMode, PlannerOutput, PlanSource};
pub use problem::{ConstraintLimits, CostWeights, FootstepPlan, ProblemSpec, SupportSide};
pub use reference::{ref_solve, shift_warm_start, RefConfig, WarmStart};
pub use terrain::{HeightMap, TerrainPlane};
