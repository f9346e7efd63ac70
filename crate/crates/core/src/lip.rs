//! Closed-form linear inverted pendulum dynamics.
//!
//! The sagittal and coronal axes are decoupled and share the natural
//! frequency `omega = sqrt(g / h)`, so every operation is applied per axis
//! with the same hyperbolic terms.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::terrain::TerrainPlane;

pub type Vec2 = Vector2<f64>;

/// Pendulum constants. `omega` is always derived from `g` and `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct LipParams {
    g: f64,
    h: f64,
    omega: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    g: f64,
    h: f64,
}

impl TryFrom<RawParams> for LipParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        LipParams::new(raw.g, raw.h)
    }
}

impl From<LipParams> for RawParams {
    fn from(p: LipParams) -> Self {
        RawParams { g: p.g, h: p.h }
    }
}

impl LipParams {
    pub fn new(g: f64, h: f64) -> Result<Self> {
        if !(g.is_finite() && h.is_finite() && g > 0.0 && h > 0.0) {
            return Err(Error::InvalidInput(format!(
                "pendulum needs g > 0 and h > 0, got g={g}, h={h}"
            )));
        }
        Ok(Self {
            g,
            h,
            omega: (g / h).sqrt(),
        })
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
}

impl Default for LipParams {
    fn default() -> Self {
        Self::new(9.81, 0.81).expect("default pendulum constants are valid")
    }
}

/// Horizontal CoM position and velocity.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LipState {
    pub pos: Vec2,
    pub vel: Vec2,
}

impl LipState {
    pub fn new(pos: Vec2, vel: Vec2) -> Self {
        Self { pos, vel }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().chain(self.vel.iter()).all(|v| v.is_finite())
    }

    /// Orbital energy per axis about `foot`: `0.5 v^2 - 0.5 w^2 (x - u)^2`.
    pub fn orbital_energy(&self, foot: &Foothold, params: &LipParams) -> Vec2 {
        let w2 = params.omega * params.omega;
        let d = self.pos - foot.xy;
        Vec2::new(
            0.5 * self.vel.x * self.vel.x - 0.5 * w2 * d.x * d.x,
            0.5 * self.vel.y * self.vel.y - 0.5 * w2 * d.y * d.y,
        )
    }

    /// Mirror about the x axis.
    pub fn mirrored(&self) -> Self {
        Self {
            pos: Vec2::new(self.pos.x, -self.pos.y),
            vel: Vec2::new(self.vel.x, -self.vel.y),
        }
    }
}

/// A foot contact point. `z` is the terrain height under the foot and does
/// not enter the horizontal dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Foothold {
    pub xy: Vec2,
    pub z: f64,
}

impl Foothold {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            xy: Vec2::new(x, y),
            z: 0.0,
        }
    }

    pub fn with_z(xy: Vec2, z: f64) -> Self {
        Self { xy, z }
    }

    pub fn mirrored(&self) -> Self {
        Self {
            xy: Vec2::new(self.xy.x, -self.xy.y),
            z: self.z,
        }
    }
}

/// Sensitivities of one support phase. The scalar blocks are identical for
/// both axes; only the duration columns differ per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepJacobian {
    pub dpos_dpos: f64,
    pub dpos_dvel: f64,
    pub dpos_dfoot: f64,
    pub dvel_dpos: f64,
    pub dvel_dvel: f64,
    pub dvel_dfoot: f64,
    /// Equals the end-of-step velocity.
    pub dpos_ddt: Vec2,
    /// Equals the end-of-step acceleration `w^2 (x' - u)`.
    pub dvel_ddt: Vec2,
}

fn check_inputs(state: &LipState, foot: &Foothold, dt: f64) -> Result<()> {
    ensure_finite("state", &[state.pos.x, state.pos.y, state.vel.x, state.vel.y])?;
    ensure_finite("foothold", &[foot.xy.x, foot.xy.y, foot.z])?;
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::InvalidInput(format!(
            "step duration must be finite and >= 0, got {dt}"
        )));
    }
    Ok(())
}

/// Propagation without validation, used on hot paths where inputs are
/// already known to be finite.
#[inline]
pub(crate) fn propagate_unchecked(
    state: &LipState,
    foot: &Vec2,
    dt: f64,
    omega: f64,
) -> LipState {
    let (s, c) = ((omega * dt).sinh(), (omega * dt).cosh());
    let d = state.pos - foot;
    LipState {
        pos: foot + d * c + state.vel * (s / omega),
        vel: d * (omega * s) + state.vel * c,
    }
}

/// Exact state after standing on `foot` for `dt` seconds.
pub fn propagate(
    state: &LipState,
    foot: &Foothold,
    dt: f64,
    params: &LipParams,
) -> Result<LipState> {
    check_inputs(state, foot, dt)?;
    Ok(propagate_unchecked(state, &foot.xy, dt, params.omega))
}

pub(crate) fn step_jacobian_unchecked(
    state: &LipState,
    foot: &Vec2,
    dt: f64,
    omega: f64,
) -> (LipState, StepJacobian) {
    let (s, c) = ((omega * dt).sinh(), (omega * dt).cosh());
    let next = propagate_unchecked(state, foot, dt, omega);
    let jac = StepJacobian {
        dpos_dpos: c,
        dpos_dvel: s / omega,
        dpos_dfoot: 1.0 - c,
        dvel_dpos: omega * s,
        dvel_dvel: c,
        dvel_dfoot: -omega * s,
        dpos_ddt: next.vel,
        dvel_ddt: (next.pos - foot) * (omega * omega),
    };
    (next, jac)
}

/// Propagated state together with its one-step sensitivities.
pub fn propagate_derivatives(
    state: &LipState,
    foot: &Foothold,
    dt: f64,
    params: &LipParams,
) -> Result<(LipState, StepJacobian)> {
    check_inputs(state, foot, dt)?;
    Ok(step_jacobian_unchecked(state, &foot.xy, dt, params.omega))
}

/// Pendulum constants for CoM motion parallel to a terrain plane.
///
/// With the heading aligned to the steepest gradient the horizontal
/// dynamics reduce to the flat pendulum with the vertical offset as height,
/// so the plane only has to be valid.
pub fn effective_params_on_plane(plane: &TerrainPlane, nominal_h0: f64, g: f64) -> Result<LipParams> {
    ensure_finite("terrain plane", &[plane.alpha, plane.beta, plane.offset])?;
    LipParams::new(g, nominal_h0)
}
