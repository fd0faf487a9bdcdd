//! The suspended quadruped: four independent limbs behind a command /
//! observation interface, sampled at the control rate.
//!
//! Hind limbs are mounted mirror-image. Their physics runs in the mirrored
//! world frame, but observations are reported in each limb's own frame, so
//! every limb looks identical to a controller.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, PlantError};
use crate::limb::{self, ActivationVector, LimbParams, LimbState, Vec2};

pub const CONTROL_RATE_HZ: f64 = 100.0;
pub const CONTROL_PERIOD: f64 = 0.01;
pub const PHYSICS_DT: f64 = 1e-3;
pub const SUBSTEPS: usize = 10;
pub const DEFAULT_NOISE_STD: f64 = 0.002;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LimbId {
    FL,
    FR,
    HL,
    HR,
}

impl LimbId {
    pub const ALL: [LimbId; 4] = [LimbId::FL, LimbId::FR, LimbId::HL, LimbId::HR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_hind(self) -> bool {
        matches!(self, LimbId::HL | LimbId::HR)
    }

    /// The limb moving in phase with this one in a trot.
    pub fn diagonal_partner(self) -> LimbId {
        match self {
            LimbId::FL => LimbId::HR,
            LimbId::HR => LimbId::FL,
            LimbId::FR => LimbId::HL,
            LimbId::HL => LimbId::FR,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LimbId::FL => "FL",
            LimbId::FR => "FR",
            LimbId::HL => "HL",
            LimbId::HR => "HR",
        }
    }
}

impl fmt::Display for LimbId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantObservation {
    pub time: f64,
    pub limbs: [LimbState; 4],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantCommand {
    pub limbs: [ActivationVector; 4],
}

impl PlantCommand {
    pub fn new(raw: [[f64; 3]; 4]) -> Self {
        PlantCommand {
            limbs: raw.map(ActivationVector::new),
        }
    }
}

/// Encoder-style sensing: noisy angles, backward-difference rates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Sensor {
    last_q: Option<[f64; 2]>,
    last_dq: Option<[f64; 2]>,
}

#[derive(Clone, Debug)]
struct LimbUnit {
    physics: LimbParams,
    orientation: f64,
    state: LimbState,
    sensor: Sensor,
}

impl LimbUnit {
    fn to_local(&self, v: Vec2) -> Vec2 {
        v * self.orientation
    }
}

/// Everything needed to continue a plant bit-exactly, apart from its noise
/// stream which is reseeded per phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSnapshot {
    pub tick: u64,
    pub q: [[f64; 2]; 4],
    pub dq: [[f64; 2]; 4],
    pub ddq: [[f64; 2]; 4],
    sensors: [Sensor; 4],
    last_observation: [[f64; 6]; 4],
}

#[derive(Clone, Debug)]
pub struct Plant {
    params: LimbParams,
    noise_std: f64,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
    limbs: [LimbUnit; 4],
    tick: u64,
    last_observation: PlantObservation,
}

/// Mid-range posture in the limb frame.
pub fn rest_posture(params: &LimbParams) -> Vec2 {
    let mid = |j: usize| 0.5 * (params.joint_limits[j][0] + params.joint_limits[j][1]);
    Vec2::new(mid(0), mid(1))
}

impl Plant {
    pub fn new(params: LimbParams, seed: u64, noise_std: f64) -> Result<Plant, Error> {
        params.validate().map_err(Error::Params)?;
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::Params(format!("noise_std must be finite and >= 0, got {noise_std}")));
        }
        let rest = rest_posture(&params);
        let limbs = LimbId::ALL.map(|id| {
            let (physics, orientation) = if id.is_hind() {
                (params.mirrored(), -1.0)
            } else {
                (params.clone(), 1.0)
            };
            LimbUnit {
                physics,
                orientation,
                state: LimbState::at_rest(rest * orientation),
                sensor: Sensor::default(),
            }
        });
        let last_observation = PlantObservation {
            time: 0.0,
            limbs: [LimbState::at_rest(rest); 4],
        };
        Ok(Plant {
            params,
            noise_std,
            noise: Normal::new(0.0, noise_std).expect("noise_std validated"),
            rng: ChaCha8Rng::seed_from_u64(seed),
            limbs,
            tick: 0,
            last_observation,
        })
    }

    /// Limb-frame parameters shared by all four limbs.
    pub fn params(&self) -> &LimbParams {
        &self.params
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn reseed_noise(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// The most recent observation (the initial posture before any tick).
    pub fn observe(&self) -> &PlantObservation {
        &self.last_observation
    }

    /// True (noise-free) state of a limb in the mirrored world frame.
    pub fn world_state(&self, limb: LimbId) -> LimbState {
        self.limbs[limb.index()].state
    }

    /// True state of a limb expressed in its own frame.
    pub fn local_state(&self, limb: LimbId) -> LimbState {
        let u = &self.limbs[limb.index()];
        LimbState {
            q: u.to_local(u.state.q),
            dq: u.to_local(u.state.dq),
            ddq: u.to_local(u.state.ddq),
        }
    }

    /// Advances every limb `ticks` control periods under zero-order hold.
    pub fn apply(&mut self, cmd: &PlantCommand, ticks: usize) -> Result<Vec<PlantObservation>, PlantError> {
        let mut out = Vec::with_capacity(ticks);
        for _ in 0..ticks {
            out.push(self.tick_once(cmd)?);
        }
        Ok(out)
    }

    fn tick_once(&mut self, cmd: &PlantCommand) -> Result<PlantObservation, PlantError> {
        for (id, unit) in LimbId::ALL.iter().zip(self.limbs.iter_mut()) {
            // re-clamp in case the command was built by hand
            let a = ActivationVector::new(cmd.limbs[id.index()].as_array());
            let mut s = unit.state;
            for _ in 0..SUBSTEPS {
                s = limb::step(&unit.physics, &s, &a, PHYSICS_DT).map_err(|source| PlantError { limb: *id, source })?;
            }
            unit.state = s;
        }
        self.tick += 1;
        let time = self.tick as f64 * CONTROL_PERIOD;

        let mut sensed = [LimbState::default(); 4];
        for (unit, obs) in self.limbs.iter_mut().zip(sensed.iter_mut()) {
            let mut q = unit.to_local(unit.state.q);
            if self.noise_std > 0.0 {
                q[0] += self.noise.sample(&mut self.rng);
                q[1] += self.noise.sample(&mut self.rng);
            }
            let dq = match unit.sensor.last_q {
                Some(prev) => (q - Vec2::from(prev)) / CONTROL_PERIOD,
                None => Vec2::zeros(),
            };
            let ddq = match unit.sensor.last_dq {
                Some(prev) => (dq - Vec2::from(prev)) / CONTROL_PERIOD,
                None => Vec2::zeros(),
            };
            let had_q = unit.sensor.last_q.is_some();
            unit.sensor.last_q = Some([q[0], q[1]]);
            if had_q {
                unit.sensor.last_dq = Some([dq[0], dq[1]]);
            }
            *obs = LimbState { q, dq, ddq };
        }
        self.last_observation = PlantObservation { time, limbs: sensed };
        Ok(self.last_observation.clone())
    }

    pub fn snapshot(&self) -> PlantSnapshot {
        let pick = |f: &dyn Fn(&LimbState) -> Vec2| self.limbs.each_ref().map(|u| {
            let v = f(&u.state);
            [v[0], v[1]]
        });
        PlantSnapshot {
            tick: self.tick,
            q: pick(&|s| s.q),
            dq: pick(&|s| s.dq),
            ddq: pick(&|s| s.ddq),
            sensors: self.limbs.each_ref().map(|u| u.sensor.clone()),
            last_observation: self.last_observation.limbs.map(|s| s.features()),
        }
    }

    pub fn restore(&mut self, snap: &PlantSnapshot) {
        self.tick = snap.tick;
        for (i, unit) in self.limbs.iter_mut().enumerate() {
            unit.state = LimbState {
                q: Vec2::from(snap.q[i]),
                dq: Vec2::from(snap.dq[i]),
                ddq: Vec2::from(snap.ddq[i]),
            };
            unit.sensor = snap.sensors[i].clone();
        }
        self.last_observation = PlantObservation {
            time: snap.tick as f64 * CONTROL_PERIOD,
            limbs: snap.last_observation.map(|f| LimbState {
                q: Vec2::new(f[0], f[1]),
                dq: Vec2::new(f[2], f[3]),
                ddq: Vec2::new(f[4], f[5]),
            }),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limb::default_limb_params;

    fn noiseless() -> Plant {
        Plant::new(default_limb_params(), 7, 0.0).unwrap()
    }

    #[test]
    fn diagonal_pairs() {
        assert_eq!(LimbId::FL.diagonal_partner(), LimbId::HR);
        assert_eq!(LimbId::FR.diagonal_partner(), LimbId::HL);
        for id in LimbId::ALL {
            assert_eq!(id.diagonal_partner().diagonal_partner(), id);
        }
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Plant::new(default_limb_params(), 0, -1.0).is_err());
        let mut p = default_limb_params();
        p.max_forces[0] = 0.0;
        assert!(matches!(Plant::new(p, 0, 0.0), Err(Error::Params(_))));
    }

    #[test]
    fn noiseless_observation_equals_state() {
        let mut plant = noiseless();
        let cmd = PlantCommand::new([[0.2, 0.7, 0.1], [0.5; 3], [0.9, 0.0, 0.3], [0.0, 0.4, 0.8]]);
        let obs = plant.apply(&cmd, 5).unwrap();
        for id in LimbId::ALL {
            assert_eq!(obs[4].limbs[id.index()].q, plant.local_state(id).q);
        }
    }

    #[test]
    fn resting_without_gravity_is_static() {
        let mut p = default_limb_params();
        p.gravity = 0.0;
        let mut plant = Plant::new(p, 0, 0.0).unwrap();
        let obs = plant.apply(&PlantCommand::default(), 20).unwrap();
        for o in &obs[1..] {
            assert_eq!(o.limbs, obs[0].limbs);
        }
    }

    #[test]
    fn out_of_range_activation_acts_as_saturated() {
        let mut a = noiseless();
        let mut b = noiseless();
        let raw = PlantCommand {
            limbs: [ActivationVector::new([1.0, 0.3, 0.0]); 4],
        };
        // PlantCommand::new clamps too; bypass it via the raw constructor
        let over = PlantCommand::new([[1.7, 0.3, -2.0]; 4]);
        assert_eq!(a.apply(&raw, 30).unwrap(), b.apply(&over, 30).unwrap());
    }

    #[test]
    fn timestamps_are_tick_multiples() {
        let mut plant = noiseless();
        let obs = plant.apply(&PlantCommand::default(), 250).unwrap();
        for (k, o) in obs.iter().enumerate() {
            assert_eq!(o.time, (k + 1) as f64 * CONTROL_PERIOD);
        }
    }

    #[test]
    fn first_samples_have_zero_rates() {
        let mut plant = Plant::new(default_limb_params(), 3, 0.01).unwrap();
        let obs = plant.apply(&PlantCommand::default(), 3).unwrap();
        for s in &obs[0].limbs {
            assert_eq!(s.dq, Vec2::zeros());
            assert_eq!(s.ddq, Vec2::zeros());
        }
        for s in &obs[1].limbs {
            assert_ne!(s.dq, Vec2::zeros());
            assert_eq!(s.ddq, Vec2::zeros());
        }
        let d = &obs[2].limbs[0];
        let expect = (obs[2].limbs[0].dq - obs[1].limbs[0].dq) / CONTROL_PERIOD;
        assert_eq!(d.ddq, expect);
    }

    #[test]
    fn snapshot_restore_continues_bit_exactly() {
        let cmd = PlantCommand::new([[0.3, 0.6, 0.2]; 4]);
        let mut a = Plant::new(default_limb_params(), 11, 0.002).unwrap();
        a.apply(&cmd, 37).unwrap();
        let snap = a.snapshot();
        let mut b = Plant::new(default_limb_params(), 99, 0.002).unwrap();
        b.restore(&snap);
        a.reseed_noise(5);
        b.reseed_noise(5);
        assert_eq!(a.observe(), b.observe());
        assert_eq!(a.apply(&cmd, 40).unwrap(), b.apply(&cmd, 40).unwrap());
    }
}
