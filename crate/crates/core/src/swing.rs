//! Quintic swing-foot trajectories with a mid-swing apex.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub type Vec3 = Vector3<f64>;

pub const DEFAULT_APEX_CLEARANCE: f64 = 0.05;

/// `p(t) = sum c[i] t^i` on `[0, duration]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuinticSegment {
    pub coeffs: [f64; 6],
    pub duration: f64,
}

impl QuinticSegment {
    /// Quintic through position, velocity and acceleration at both ends.
    pub fn from_boundary(start: [f64; 3], end: [f64; 3], duration: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidInput(format!("duration must be > 0, got {duration}")));
        }
        ensure_finite("boundary conditions", &[start, end].concat())?;
        let [p0, v0, a0] = start;
        let [p1, v1, a1] = end;
        let t = duration;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        let c3 = (20.0 * (p1 - p0) - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3);
        let c4 = (30.0 * (p0 - p1) + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2) / (2.0 * t4);
        let c5 = (12.0 * (p1 - p0) - 6.0 * (v1 + v0) * t - (a0 - a1) * t2) / (2.0 * t5);
        Ok(Self {
            coeffs: [p0, v0, 0.5 * a0, c3, c4, c5],
            duration,
        })
    }

    /// Position, velocity and acceleration at `t`, clamped to the segment.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let t = t.clamp(0.0, self.duration);
        let c = &self.coeffs;
        let p = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let v = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        let a = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
        [p, v, a]
    }
}

/// Consecutive quintic segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseQuintic {
    pub segments: Vec<QuinticSegment>,
}

impl PiecewiseQuintic {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn eval(&self, t: f64) -> [f64; 3] {
        let mut t0 = 0.0;
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            if t < t0 + seg.duration || i == last {
                return seg.eval(t - t0);
            }
            t0 += seg.duration;
        }
        unreachable!("piecewise quintic has at least one segment")
    }
}

/// Position, velocity and acceleration of the foot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootState {
    pub pos: Vec3,
    pub vel: Vec3,
    pub acc: Vec3,
}

impl FootState {
    pub fn at_rest(pos: Vec3) -> Self {
        Self {
            pos,
            vel: Vec3::zeros(),
            acc: Vec3::zeros(),
        }
    }

    fn axis(&self, i: usize) -> [f64; 3] {
        [self.pos[i], self.vel[i], self.acc[i]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwingTrajectory {
    pub x: PiecewiseQuintic,
    pub y: PiecewiseQuintic,
    pub z: PiecewiseQuintic,
    pub duration: f64,
    pub apex_height: f64,
    /// Time of the apex joint, or `None` once the apex has passed.
    pub apex_time: Option<f64>,
}

/// Samples a trajectory at `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwingSample {
    pub t: f64,
    pub state: FootState,
}

/// Apex height for the default clearance above the higher endpoint.
pub fn default_apex(start_z: f64, goal_z: f64) -> f64 {
    start_z.max(goal_z) + DEFAULT_APEX_CLEARANCE
}

fn check_duration(duration: f64) -> Result<()> {
    if duration.is_finite() && duration > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("swing duration must be > 0, got {duration}")))
    }
}

fn apex_z(start: [f64; 3], goal: f64, apex_time: f64, total: f64, apex: f64) -> Result<PiecewiseQuintic> {
    let rest = [apex, 0.0, 0.0];
    Ok(PiecewiseQuintic {
        segments: vec![
            QuinticSegment::from_boundary(start, rest, apex_time)?,
            QuinticSegment::from_boundary(rest, [goal, 0.0, 0.0], total - apex_time)?,
        ],
    })
}

/// Swing from `start` to `goal` that reaches `apex_height` at rest halfway.
pub fn plan_swing(start: &FootState, goal: &Vec3, duration: f64, apex_height: f64) -> Result<SwingTrajectory> {
    check_duration(duration)?;
    ensure_finite("swing goal", goal.as_slice())?;
    if !(apex_height >= start.pos.z && apex_height >= goal.z) {
        return Err(Error::InvalidInput(format!(
            "apex {apex_height} must not be below the endpoints ({}, {})",
            start.pos.z, goal.z
        )));
    }
    let single = |i: usize| -> Result<PiecewiseQuintic> {
        Ok(PiecewiseQuintic {
            segments: vec![QuinticSegment::from_boundary(start.axis(i), [goal[i], 0.0, 0.0], duration)?],
        })
    };
    let half = 0.5 * duration;
    Ok(SwingTrajectory {
        x: single(0)?,
        y: single(1)?,
        z: apex_z(start.axis(2), goal.z, half, duration, apex_height)?,
        duration,
        apex_height,
        apex_time: Some(half),
    })
}

impl SwingTrajectory {
    pub fn eval(&self, t: f64) -> FootState {
        let [px, vx, ax] = self.x.eval(t);
        let [py, vy, ay] = self.y.eval(t);
        let [pz, vz, az] = self.z.eval(t);
        FootState {
            pos: Vec3::new(px, py, pz),
            vel: Vec3::new(vx, vy, vz),
            acc: Vec3::new(ax, ay, az),
        }
    }

    /// Regenerates the remainder from the state at `t` toward `new_goal`,
    /// keeping the touchdown time. The result starts at local time zero.
    pub fn retarget(&self, t: f64, new_goal: &Vec3) -> Result<SwingTrajectory> {
        self.replan(t, new_goal, self.duration - t)
    }

    /// Like [`retarget`](Self::retarget) with a new remaining duration. An
    /// apex still ahead keeps its timing when it falls before touchdown.
    pub fn replan(&self, t: f64, new_goal: &Vec3, remaining: f64) -> Result<SwingTrajectory> {
        check_duration(remaining)?;
        ensure_finite("swing goal", new_goal.as_slice())?;
        let now = self.eval(t);
        let single = |i: usize| -> Result<PiecewiseQuintic> {
            Ok(PiecewiseQuintic {
                segments: vec![QuinticSegment::from_boundary(now.axis(i), [new_goal[i], 0.0, 0.0], remaining)?],
            })
        };
        let (z, apex_time, apex_height) = match self.apex_time {
            Some(at) if at > t && at - t < remaining => {
                let apex = self.apex_height.max(new_goal.z);
                (apex_z(now.axis(2), new_goal.z, at - t, remaining, apex)?, Some(at - t), apex)
            }
            _ => (single(2)?, None, self.apex_height),
        };
        Ok(SwingTrajectory {
            x: single(0)?,
            y: single(1)?,
            z,
            duration: remaining,
            apex_height,
            apex_time,
        })
    }

    /// True once the apex has been passed.
    pub fn descending(&self, t: f64) -> bool {
        self.apex_time.is_none_or(|a| t > a)
    }
}

/// Uniform samples over the whole swing, both endpoints included:
/// `max(2, floor(duration * rate) + 1)` points.
pub fn resample(traj: &SwingTrajectory, rate: f64) -> Result<Vec<SwingSample>> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidInput(format!("rate must be > 0, got {rate}")));
    }
    let n = ((traj.duration * rate).floor() as usize + 1).max(2);
    let step = traj.duration / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let t = if i == n - 1 { traj.duration } else { i as f64 * step };
            SwingSample { t, state: traj.eval(t) }
        })
        .collect())
}
