//! Desired cyclical joint trajectories for the four limbs.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::limb::{LimbParams, Vec2};
use crate::plant::LimbId;

pub const DEFAULT_CYCLE_PERIOD: f64 = 3.6;
pub const DEFAULT_TASK_DURATION: f64 = 20.0;
pub const DEFAULT_CENTERS: [f64; 2] = [0.1, 1.2];
pub const DEFAULT_AMPLITUDES: [f64; 2] = [0.5, 0.5];
/// Trot: diagonal pairs in phase, the two diagonals half a cycle apart.
/// Indexed by [`LimbId::index`].
pub const TROT_OFFSETS: [f64; 4] = [0.0, PI, PI, 0.0];

/// Ten joint-space points around a closed orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [[f64; 2]; 10]);

impl FeatureVector {
    /// Ten points evenly spaced in angle around an axis-aligned ellipse.
    pub fn ellipse(center: [f64; 2], radii: [f64; 2]) -> Self {
        let mut pts = [[0.0; 2]; 10];
        for (i, p) in pts.iter_mut().enumerate() {
            let th = TAU * i as f64 / 10.0;
            *p = [center[0] + radii[0] * th.cos(), center[1] + radii[1] * th.sin()];
        }
        FeatureVector(pts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OrbitSource {
    Sinusoid {
        centers: [f64; 2],
        amplitudes: [f64; 2],
        /// Phase lead of the distal joint over the proximal joint (rad).
        phase_shift: f64,
    },
    Feature(FeatureVector),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub source: OrbitSource,
    pub cycle_period: f64,
    pub duration: f64,
    /// Cycle phase offset per limb (rad), indexed by [`LimbId::index`].
    pub phase_offsets: [f64; 4],
}

/// Proximal `c + A sin(2πt/P + φ)`, distal a quarter cycle ahead, trot
/// offsets, default centres and amplitudes.
pub fn sinusoid_task(cycle_period: f64, duration: f64) -> Result<TrajectorySpec, Error> {
    sinusoid_task_with(
        DEFAULT_CENTERS,
        DEFAULT_AMPLITUDES,
        cycle_period,
        duration,
        &LimbParams::default(),
    )
}

pub fn sinusoid_task_with(
    centers: [f64; 2],
    amplitudes: [f64; 2],
    cycle_period: f64,
    duration: f64,
    params: &LimbParams,
) -> Result<TrajectorySpec, Error> {
    let spec = TrajectorySpec {
        source: OrbitSource::Sinusoid {
            centers,
            amplitudes,
            phase_shift: FRAC_PI_2,
        },
        cycle_period,
        duration,
        phase_offsets: TROT_OFFSETS,
    };
    spec.validate(params)?;
    Ok(spec)
}

/// Piecewise-linear closed orbit through the feature points, point `i`
/// reached at `t = i·P/10`.
pub fn feature_orbit(
    fv: FeatureVector,
    cycle_period: f64,
    duration: f64,
    params: &LimbParams,
) -> Result<TrajectorySpec, Error> {
    let spec = TrajectorySpec {
        source: OrbitSource::Feature(fv),
        cycle_period,
        duration,
        phase_offsets: TROT_OFFSETS,
    };
    spec.validate(params)?;
    Ok(spec)
}

impl TrajectorySpec {
    pub fn validate(&self, params: &LimbParams) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::Trajectory(msg));
        if !(self.cycle_period.is_finite() && self.cycle_period > 0.0) {
            return bad(format!("cycle_period must be > 0, got {}", self.cycle_period));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        let off = &self.phase_offsets;
        if off.iter().any(|v| !v.is_finite()) {
            return bad("phase offsets must be finite".into());
        }
        if off[LimbId::FL.index()] != off[LimbId::HR.index()] || off[LimbId::FR.index()] != off[LimbId::HL.index()] {
            return bad(format!("diagonal limbs need equal phase offsets, got {off:?}"));
        }
        let lim = &params.joint_limits;
        let inside = |j: usize, v: f64| v >= lim[j][0] && v <= lim[j][1];
        match &self.source {
            OrbitSource::Sinusoid { centers, amplitudes, phase_shift } => {
                if !phase_shift.is_finite() {
                    return bad("phase_shift must be finite".into());
                }
                for j in 0..2 {
                    let (c, a) = (centers[j], amplitudes[j]);
                    if !(c.is_finite() && a.is_finite() && a >= 0.0) {
                        return bad(format!("joint {j}: centre {c} / amplitude {a} invalid"));
                    }
                    if !inside(j, c - a) || !inside(j, c + a) {
                        return bad(format!(
                            "joint {j}: sinusoid range [{}, {}] leaves joint limits [{}, {}]",
                            c - a,
                            c + a,
                            lim[j][0],
                            lim[j][1]
                        ));
                    }
                }
            }
            OrbitSource::Feature(fv) => {
                for (i, p) in fv.0.iter().enumerate() {
                    for j in 0..2 {
                        if !p[j].is_finite() || !inside(j, p[j]) {
                            return bad(format!("feature point {i} joint {j} = {} is outside joint limits", p[j]));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Desired joint angles of a limb at time `t`.
    pub fn position(&self, limb: LimbId, t: f64) -> Vec2 {
        let phase = TAU * t / self.cycle_period + self.phase_offsets[limb.index()];
        match &self.source {
            OrbitSource::Sinusoid { centers, amplitudes, phase_shift } => Vec2::new(
                centers[0] + amplitudes[0] * phase.sin(),
                centers[1] + amplitudes[1] * (phase + phase_shift).sin(),
            ),
            OrbitSource::Feature(fv) => {
                let u = (phase / TAU).rem_euclid(1.0) * 10.0;
                let i = (u.floor() as usize).min(9);
                let frac = u - i as f64;
                let p0 = fv.0[i];
                let p1 = fv.0[(i + 1) % 10];
                if frac == 0.0 {
                    return Vec2::from(p0);
                }
                Vec2::new(p0[0] + frac * (p1[0] - p0[0]), p0[1] + frac * (p1[1] - p0[1]))
            }
        }
    }

    pub fn samples(&self, control_rate: f64) -> usize {
        (self.duration * control_rate).round() as usize + 1
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LimbTrace {
    pub q: Vec<Vec2>,
    pub dq: Vec<Vec2>,
    pub ddq: Vec<Vec2>,
}

impl LimbTrace {
    pub fn features(&self, i: usize) -> [f64; 6] {
        let (q, dq, ddq) = (self.q[i], self.dq[i], self.ddq[i]);
        [q[0], q[1], dq[0], dq[1], ddq[0], ddq[1]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesiredKinematics {
    pub dt: f64,
    pub times: Vec<f64>,
    pub limbs: [LimbTrace; 4],
}

impl DesiredKinematics {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Samples the spec at `t = i/rate` for `i = 0..=duration·rate`.
///
/// Velocities are central differences of the sampled angles, accelerations
/// central differences of the velocities. The orbit is defined for all `t`,
/// so the grid is padded by two ticks on each side and the end samples use
/// central differences as well.
pub fn sample(spec: &TrajectorySpec, control_rate: f64) -> DesiredKinematics {
    assert!(control_rate > 0.0, "control rate must be positive");
    let n = spec.samples(control_rate);
    let dt = 1.0 / control_rate;
    let times: Vec<f64> = (0..n).map(|i| i as f64 / control_rate).collect();
    let limbs = LimbId::ALL.map(|id| {
        // padded index p ↔ sample index p - 2
        let padded: Vec<Vec2> = (0..n + 4)
            .map(|p| spec.position(id, (p as f64 - 2.0) / control_rate))
            .collect();
        let vel: Vec<Vec2> = (1..n + 3).map(|p| (padded[p + 1] - padded[p - 1]) / (2.0 * dt)).collect();
        // vel[k] ↔ padded k + 1 ↔ sample k - 1
        let q = padded[2..n + 2].to_vec();
        let dq = vel[1..n + 1].to_vec();
        let ddq = (1..n + 1).map(|k| (vel[k + 1] - vel[k - 1]) / (2.0 * dt)).collect();
        LimbTrace { q, dq, ddq }
    });
    DesiredKinematics { dt, times, limbs }
}
