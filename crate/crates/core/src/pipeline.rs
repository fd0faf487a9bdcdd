//! Babble, fit, refine: the general-to-particular learning loop.
//!
//! Every observation recorded after a control tick is paired with the
//! activation held during that tick. At run time the map is therefore
//! queried with the desired kinematics at the *end* of the upcoming tick.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, PlantError, TrainError};
use crate::inverse_map::{
    calibrate_scaler, AdamConfig, Dataset, InverseMap, Phase, ScaleMode, TrainConfig, TrainReport, KINEMATIC_INPUTS,
    PER_LIMB_HIDDEN, TENDONS, WHOLE_BODY_HIDDEN,
};
use crate::limb::{clamp_unit, ActivationVector, LimbState, Vec2};
use crate::plant::{LimbId, Plant, PlantCommand, CONTROL_RATE_HZ};
use crate::trajectory::DesiredKinematics;

/// SplitMix64 finalizer over `master + stream`, used to give every random
/// consumer its own reproducible stream.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub mod streams {
    pub const PLANT: u64 = 1;
    pub const BABBLE_SIGNAL: u64 = 2;
    pub const BABBLE_NOISE: u64 = 10;
    pub const TRIAL_NOISE: u64 = 100;
    pub const MAP_INIT: u64 = 1_000;
    pub const SHUFFLE: u64 = 10_000;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BabbleConfig {
    /// Babbling time (s).
    pub duration: f64,
    /// Bounds on how long each random level is held (s).
    pub hold_min: f64,
    pub hold_max: f64,
    /// Leading slice of the babble used to fit the input scaler (s).
    pub calibration_duration: f64,
}

impl Default for BabbleConfig {
    fn default() -> Self {
        BabbleConfig {
            duration: 300.0,
            hold_min: 0.1,
            hold_max: 0.5,
            calibration_duration: 60.0,
        }
    }
}

impl BabbleConfig {
    /// The one-minute babble.
    pub fn short() -> Self {
        BabbleConfig {
            duration: 60.0,
            ..BabbleConfig::default()
        }
    }

    pub fn ticks(&self) -> usize {
        (self.duration * CONTROL_RATE_HZ).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    pub num_refinements: usize,
    /// Length of each trial (s).
    pub duration: f64,
    /// Activation change per radian of joint error.
    pub feedback_gain: f64,
    /// Static hold at the start posture before each trial (s).
    pub settle_duration: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            num_refinements: 15,
            duration: 20.0,
            feedback_gain: 0.5,
            settle_duration: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// One map per limb, 6 kinematic inputs to 3 activations.
    #[default]
    PerLimb,
    /// One map for the whole body, 24 inputs to 12 activations.
    WholeBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    /// Hidden width; defaults to 6 per limb or 24 for the whole-body map.
    pub hidden: Option<usize>,
    pub scale_mode: ScaleMode,
    pub batch_size: usize,
    pub initial_epochs: usize,
    pub refine_epochs: usize,
    pub adam: AdamConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            architecture: Architecture::PerLimb,
            hidden: None,
            scale_mode: ScaleMode::StdDev,
            batch_size: 128,
            initial_epochs: 50,
            refine_epochs: 20,
            adam: AdamConfig::default(),
        }
    }
}

impl NetworkConfig {
    pub fn hidden_size(&self) -> usize {
        self.hidden.unwrap_or(match self.architecture {
            Architecture::PerLimb => PER_LIMB_HIDDEN,
            Architecture::WholeBody => WHOLE_BODY_HIDDEN,
        })
    }

    pub fn initial_training(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.initial_epochs,
            batch_size: self.batch_size,
            adam: self.adam,
        }
    }

    pub fn refine_training(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.refine_epochs,
            ..self.initial_training()
        }
    }
}

/// Piecewise-constant random activations for all twelve tendons.
#[derive(Clone, Debug, PartialEq)]
pub struct BabbleSchedule {
    pub commands: Vec<PlantCommand>,
    /// Drawn hold levels per limb and tendon, in time order.
    pub levels: [[Vec<f64>; 3]; 4],
}

/// Each tendon gets its own stream of holds: level ~ U[0, 1], length ~
/// U[hold_min, hold_max] rounded to whole ticks (at least one).
pub fn generate_babble(cfg: &BabbleConfig, seed: u64) -> BabbleSchedule {
    let ticks = cfg.ticks();
    let mut raw = vec![[[0.0; 3]; 4]; ticks];
    let mut levels: [[Vec<f64>; 3]; 4] = Default::default();
    for limb in 0..4 {
        for tendon in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, (limb * 3 + tendon) as u64));
            let mut t = 0;
            while t < ticks {
                let level: f64 = rng.gen_range(0.0..=1.0);
                let hold = if cfg.hold_max > cfg.hold_min {
                    rng.gen_range(cfg.hold_min..=cfg.hold_max)
                } else {
                    cfg.hold_min
                };
                let len = ((hold * CONTROL_RATE_HZ).round() as usize).max(1);
                for slot in raw.iter_mut().skip(t).take(len) {
                    slot[limb][tendon] = level;
                }
                levels[limb][tendon].push(level);
                t += len;
            }
        }
    }
    BabbleSchedule {
        commands: raw.into_iter().map(PlantCommand::new).collect(),
        levels,
    }
}

/// Proportional joint-error feedback routed through the tendon sign pattern:
/// `gain · Sᵀ (q_des − q_obs)`.
pub fn feedback_correction(gain: f64, q_des: &Vec2, q_obs: &Vec2, sign_structure: &[[f64; 3]; 2]) -> [f64; 3] {
    let e = q_des - q_obs;
    let mut delta = [0.0; 3];
    for (k, d) in delta.iter_mut().enumerate() {
        *d = gain * (sign_structure[0][k] * e[0] + sign_structure[1][k] * e[1]);
    }
    delta
}

/// Inverse maps with their cumulative training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Learner {
    pub architecture: Architecture,
    pub maps: Vec<InverseMap>,
    pub datasets: Vec<Dataset>,
}

impl Learner {
    pub fn new(net: &NetworkConfig, master_seed: u64) -> Self {
        let hidden = net.hidden_size();
        let (count, inputs, outputs) = match net.architecture {
            Architecture::PerLimb => (4, KINEMATIC_INPUTS, TENDONS),
            Architecture::WholeBody => (1, 4 * KINEMATIC_INPUTS, 4 * TENDONS),
        };
        Learner {
            architecture: net.architecture,
            maps: (0..count)
                .map(|i| InverseMap::new(inputs, hidden, outputs, derive_seed(master_seed, streams::MAP_INIT + i as u64)))
                .collect(),
            datasets: (0..count).map(|_| Dataset::new(inputs, outputs)).collect(),
        }
    }

    pub fn samples(&self) -> usize {
        self.datasets[0].len()
    }

    /// Clamped feedforward activations for the given per-limb kinematics.
    pub fn predict(&self, kin: &[[f64; 6]; 4]) -> [[f64; 3]; 4] {
        let mut out = [[0.0; 3]; 4];
        match self.architecture {
            Architecture::PerLimb => {
                for (limb, o) in out.iter_mut().enumerate() {
                    let y = self.maps[limb].predict(&kin[limb]);
                    o.copy_from_slice(&y);
                }
            }
            Architecture::WholeBody => {
                let y = self.maps[0].predict(kin.as_flattened());
                for (limb, o) in out.iter_mut().enumerate() {
                    o.copy_from_slice(&y[limb * 3..limb * 3 + 3]);
                }
            }
        }
        out
    }

    pub fn record(&mut self, achieved: &[[f64; 6]; 4], applied: &[[f64; 3]; 4], phase: Phase) {
        match self.architecture {
            Architecture::PerLimb => {
                for limb in 0..4 {
                    self.datasets[limb].push(&achieved[limb], &applied[limb], phase);
                }
            }
            Architecture::WholeBody => {
                self.datasets[0].push(achieved.as_flattened(), applied.as_flattened(), phase);
            }
        }
    }

    /// Calibrates each map's scaler on the leading `calibration` samples.
    pub fn calibrate(&mut self, calibration: usize, mode: ScaleMode) -> Result<(), Error> {
        for (i, (map, data)) in self.maps.iter_mut().zip(&self.datasets).enumerate() {
            let scaler = calibrate_scaler(&data.head(calibration), mode).map_err(|source| Error::Training {
                map: Some(i),
                source,
            })?;
            map.set_scaler(scaler);
        }
        Ok(())
    }

    /// Trains every map on its full dataset, warm-started, one thread per map.
    pub fn train(&mut self, cfg: &TrainConfig, master_seed: u64, phase_index: u64) -> Result<Vec<TrainReport>, Error> {
        let results: Vec<Result<TrainReport, TrainError>> = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .maps
                .iter_mut()
                .zip(&self.datasets)
                .enumerate()
                .map(|(i, (map, data))| {
                    let seed = derive_seed(master_seed, streams::SHUFFLE + 100 * phase_index + i as u64);
                    s.spawn(move || map.train(data, cfg, seed))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        });
        results
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.map_err(|source| Error::Training { map: Some(i), source }))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BabbleReport {
    pub samples: usize,
    pub fit_mse: Vec<f64>,
    /// MSE of predicting each output's mean, for reference.
    pub baseline_mse: Vec<f64>,
}

fn constant_mean_mse(data: &Dataset) -> f64 {
    let n = data.len() as f64;
    let mut total = 0.0;
    for k in 0..data.outputs() {
        let mean = (0..data.len()).map(|i| data.target(i)[k]).sum::<f64>() / n;
        total += (0..data.len()).map(|i| (data.target(i)[k] - mean).powi(2)).sum::<f64>();
    }
    total / (n * data.outputs() as f64)
}

/// Drives the plant with the babble schedule and records training pairs.
pub fn collect_babble(plant: &mut Plant, learner: &mut Learner, schedule: &BabbleSchedule) -> Result<(), PlantError> {
    for cmd in &schedule.commands {
        let obs = plant.apply(cmd, 1)?.pop().expect("one tick");
        let achieved = obs.limbs.map(|s| s.features());
        let applied = cmd.limbs.map(|a| a.as_array());
        learner.record(&achieved, &applied, Phase::Babble);
    }
    Ok(())
}

/// Babbles, calibrates the scaler and trains fresh maps.
pub fn babble_and_fit(
    plant: &mut Plant,
    cfg: &BabbleConfig,
    net: &NetworkConfig,
    master_seed: u64,
) -> Result<(Learner, BabbleReport), Error> {
    plant.reseed_noise(derive_seed(master_seed, streams::BABBLE_NOISE));
    let schedule = generate_babble(cfg, derive_seed(master_seed, streams::BABBLE_SIGNAL));
    let mut learner = Learner::new(net, master_seed);
    collect_babble(plant, &mut learner, &schedule)?;
    let calibration = (cfg.calibration_duration * CONTROL_RATE_HZ).round() as usize;
    learner.calibrate(calibration, net.scale_mode)?;
    let reports = learner.train(&net.initial_training(), master_seed, 0)?;
    let report = BabbleReport {
        samples: learner.samples(),
        fit_mse: reports.iter().map(|r| r.final_mse).collect(),
        baseline_mse: learner.datasets.iter().map(constant_mean_mse).collect(),
    };
    Ok((learner, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmseReport {
    /// Per limb, per joint (rad).
    pub per_joint: [[f64; 2]; 4],
    /// Mean of the eight joint values (rad).
    pub aggregate: f64,
}

impl RmseReport {
    pub fn values(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (i, v) in self.per_joint.as_flattened().iter().enumerate() {
            out[i] = *v;
        }
        out
    }
}

/// Root of the mean square of `errors`, computed on values scaled by their
/// largest magnitude so a constant error comes back exactly.
fn rms(errors: impl Iterator<Item = f64> + Clone) -> f64 {
    let peak = errors.clone().fold(0.0_f64, |m, e| m.max(e.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return peak;
    }
    let mut n = 0usize;
    let mut sum = 0.0;
    for e in errors {
        let r = e / peak;
        sum += r * r;
        n += 1;
    }
    peak * (sum / n as f64).sqrt()
}

/// Joint-angle RMSE over the second half of each series.
pub fn evaluate_rmse(desired: &[Vec<Vec2>; 4], achieved: &[Vec<Vec2>; 4]) -> Result<RmseReport, Error> {
    let mut per_joint = [[0.0; 2]; 4];
    for limb in 0..4 {
        let (d, a) = (&desired[limb], &achieved[limb]);
        if d.len() != a.len() {
            return Err(Error::LengthMismatch(format!(
                "limb {}: {} desired vs {} achieved samples",
                LimbId::ALL[limb],
                d.len(),
                a.len()
            )));
        }
        if d.is_empty() {
            return Err(Error::LengthMismatch(format!("limb {}: empty series", LimbId::ALL[limb])));
        }
        let start = d.len() / 2;
        for (j, out) in per_joint[limb].iter_mut().enumerate() {
            *out = rms(d[start..].iter().zip(&a[start..]).map(move |(x, y)| x[j] - y[j]));
        }
    }
    let aggregate = per_joint.as_flattened().iter().sum::<f64>() / 8.0;
    Ok(RmseReport { per_joint, aggregate })
}

/// One executed task trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    /// Number of retunes the maps had received when this trial ran.
    pub index: usize,
    pub times: Vec<f64>,
    /// Per limb, per sample: `(q₀, q₁, q̇₀, q̇₁, q̈₀, q̈₁)`.
    pub desired: [Vec<[f64; 6]>; 4],
    pub achieved: [Vec<[f64; 6]>; 4],
    pub activations: [Vec<[f64; 3]>; 4],
    pub rmse: RmseReport,
    /// Excluded from determinism comparisons.
    pub wall_clock: f64,
}

impl TrialRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn joint_series(&self) -> ([Vec<Vec2>; 4], [Vec<Vec2>; 4]) {
        let pick = |s: &[Vec<[f64; 6]>; 4]| s.each_ref().map(|v| v.iter().map(|f| Vec2::new(f[0], f[1])).collect());
        (pick(&self.desired), pick(&self.achieved))
    }
}

/// Holds the trial's start posture, then tracks the desired kinematics for
/// `desired.len() - 1` ticks. Nothing is learned.
pub fn run_trial(
    plant: &mut Plant,
    learner: &Learner,
    desired: &DesiredKinematics,
    cfg: &RefinementConfig,
    index: usize,
) -> Result<TrialRecord, PlantError> {
    let started = Instant::now();
    let sign = plant.params().sign_structure();
    let gain = cfg.feedback_gain;

    let settle_ticks = (cfg.settle_duration * CONTROL_RATE_HZ).round() as usize;
    let start = desired.limbs.each_ref().map(|tr| tr.q[0]);
    let hold = start.map(|q| [q[0], q[1], 0.0, 0.0, 0.0, 0.0]);
    let hold_ff = learner.predict(&hold);
    for _ in 0..settle_ticks {
        let obs = plant.observe().limbs;
        let cmd = compose_command(&hold_ff, &start, &obs, gain, &sign);
        plant.apply(&cmd, 1)?;
    }

    let ticks = desired.len().saturating_sub(1);
    let mut rec = TrialRecord {
        index,
        times: Vec::with_capacity(ticks),
        desired: Default::default(),
        achieved: Default::default(),
        activations: Default::default(),
        rmse: RmseReport {
            per_joint: [[0.0; 2]; 4],
            aggregate: 0.0,
        },
        wall_clock: 0.0,
    };
    for i in 0..ticks {
        let target = desired.limbs.each_ref().map(|tr| tr.features(i + 1));
        let q_now = desired.limbs.each_ref().map(|tr| tr.q[i]);
        let ff = learner.predict(&target);
        let cmd = compose_command(&ff, &q_now, &plant.observe().limbs, gain, &sign);
        let obs = plant.apply(&cmd, 1)?.pop().expect("one tick");
        rec.times.push(desired.times[i + 1]);
        for limb in 0..4 {
            rec.desired[limb].push(target[limb]);
            rec.achieved[limb].push(obs.limbs[limb].features());
            rec.activations[limb].push(cmd.limbs[limb].as_array());
        }
    }
    let (d, a) = rec.joint_series();
    rec.rmse = evaluate_rmse(&d, &a).expect("equal-length series");
    rec.wall_clock = started.elapsed().as_secs_f64();
    Ok(rec)
}

fn compose_command(
    ff: &[[f64; 3]; 4],
    q_des: &[Vec2; 4],
    obs: &[LimbState; 4],
    gain: f64,
    sign: &[[f64; 3]; 2],
) -> PlantCommand {
    let mut raw = [[0.0; 3]; 4];
    for limb in 0..4 {
        let fb = feedback_correction(gain, &q_des[limb], &obs[limb].q, sign);
        for k in 0..3 {
            raw[limb][k] = clamp_unit(ff[limb][k] + fb[k]);
        }
    }
    PlantCommand {
        limbs: raw.map(ActivationVector::new),
    }
}

/// Runs trial `k - 1`'s maps on the task, appends the achieved data and
/// retunes every map on the cumulative dataset. `k` counts from 1.
pub fn run_refinement(
    plant: &mut Plant,
    learner: &mut Learner,
    desired: &DesiredKinematics,
    cfg: &RefinementConfig,
    net: &NetworkConfig,
    master_seed: u64,
    k: usize,
) -> Result<TrialRecord, Error> {
    assert!(k >= 1, "refinements count from 1");
    plant.reseed_noise(derive_seed(master_seed, streams::TRIAL_NOISE + (k - 1) as u64));
    let rec = run_trial(plant, learner, desired, cfg, k - 1).map_err(|source| Error::Plant {
        refinement: Some(k),
        source,
    })?;
    append_trial(learner, &rec, k);
    learner.train(&net.refine_training(), master_seed, k as u64)?;
    Ok(rec)
}

pub fn append_trial(learner: &mut Learner, rec: &TrialRecord, k: usize) {
    for i in 0..rec.len() {
        let achieved = [0, 1, 2, 3].map(|l| rec.achieved[l][i]);
        let applied = [0, 1, 2, 3].map(|l| rec.activations[l][i]);
        learner.record(&achieved, &applied, Phase::Refinement(k as u32));
    }
}

/// Final trial after the last retune.
pub fn run_evaluation(
    plant: &mut Plant,
    learner: &Learner,
    desired: &DesiredKinematics,
    cfg: &RefinementConfig,
    master_seed: u64,
) -> Result<TrialRecord, Error> {
    let k = cfg.num_refinements;
    plant.reseed_noise(derive_seed(master_seed, streams::TRIAL_NOISE + k as u64));
    run_trial(plant, learner, desired, cfg, k).map_err(|source| Error::Plant {
        refinement: Some(k),
        source,
    })
}
