//! Experiment configuration: one TOML file with a section per subsystem.
//!
//! Unknown keys are rejected. Every field has a default, so an empty file is
//! the default experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error};
use crate::limb::LimbParams;
use crate::pipeline::{BabbleConfig, NetworkConfig, RefinementConfig};
use crate::plant::DEFAULT_NOISE_STD;
use crate::trajectory::{
    FeatureVector, OrbitSource, TrajectorySpec, DEFAULT_AMPLITUDES, DEFAULT_CENTERS, DEFAULT_CYCLE_PERIOD,
    TROT_OFFSETS,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Standard deviation of additive angle noise (rad).
    pub noise_std: f64,
    pub limb: LimbParams,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            noise_std: DEFAULT_NOISE_STD,
            limb: LimbParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Sinusoid,
    Feature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub cycle_period: f64,
    pub centers: [f64; 2],
    pub amplitudes: [f64; 2],
    pub phase_shift: f64,
    /// Ten `[proximal, distal]` points, used when `kind = "feature"`.
    pub points: Option<Vec<[f64; 2]>>,
    /// Cycle phase per limb in FL, FR, HL, HR order (rad).
    pub phase_offsets: [f64; 4],
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            kind: TaskKind::Sinusoid,
            cycle_period: DEFAULT_CYCLE_PERIOD,
            centers: DEFAULT_CENTERS,
            amplitudes: DEFAULT_AMPLITUDES,
            phase_shift: std::f64::consts::FRAC_PI_2,
            points: None,
            phase_offsets: TROT_OFFSETS,
        }
    }
}

/// Which exports `refine` writes on completion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub endpoints: bool,
    pub joints: bool,
    pub rmse: bool,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            endpoints: false,
            joints: false,
            rmse: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub plant: PlantConfig,
    pub babble: BabbleConfig,
    pub network: NetworkConfig,
    pub refinement: RefinementConfig,
    pub task: TaskConfig,
    pub export: ExportConfig,
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{name}: {msg}"))
}

fn positive(name: &str, v: f64) -> Result<(), Error> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be a finite number > 0, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.plant
            .limb
            .validate()
            .map_err(|m| field("plant.limb", m))?;
        let ns = self.plant.noise_std;
        if !(ns.is_finite() && ns >= 0.0) {
            return Err(field("plant.noise_std", format!("must be >= 0, got {ns}")));
        }

        let b = &self.babble;
        positive("babble.duration", b.duration)?;
        positive("babble.hold_min", b.hold_min)?;
        positive("babble.hold_max", b.hold_max)?;
        if b.hold_min > b.hold_max {
            return Err(field("babble.hold_min", format!("{} exceeds hold_max {}", b.hold_min, b.hold_max)));
        }
        positive("babble.calibration_duration", b.calibration_duration)?;

        let n = &self.network;
        if n.hidden == Some(0) {
            return Err(field("network.hidden", "must be >= 1"));
        }
        for (name, v) in [
            ("network.batch_size", n.batch_size),
            ("network.initial_epochs", n.initial_epochs),
            ("network.refine_epochs", n.refine_epochs),
        ] {
            if v == 0 {
                return Err(field(name, "must be >= 1"));
            }
        }
        positive("network.adam.lr", n.adam.lr)?;
        positive("network.adam.eps", n.adam.eps)?;
        for (name, beta) in [("network.adam.beta1", n.adam.beta1), ("network.adam.beta2", n.adam.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(field(name, format!("must lie in [0, 1), got {beta}")));
            }
        }

        let r = &self.refinement;
        positive("refinement.duration", r.duration)?;
        if !(r.feedback_gain.is_finite() && r.feedback_gain >= 0.0) {
            return Err(field("refinement.feedback_gain", format!("must be >= 0, got {}", r.feedback_gain)));
        }
        if !(r.settle_duration.is_finite() && r.settle_duration >= 0.0) {
            return Err(field("refinement.settle_duration", format!("must be >= 0, got {}", r.settle_duration)));
        }

        positive("task.cycle_period", self.task.cycle_period)?;
        if self.task.kind == TaskKind::Feature {
            match &self.task.points {
                None => return Err(field("task.points", "required when kind = \"feature\"")),
                Some(p) if p.len() != 10 => {
                    return Err(field("task.points", format!("needs exactly 10 points, got {}", p.len())))
                }
                _ => {}
            }
        }
        self.trajectory_spec().map_err(|e| field("task", e))?;
        Ok(())
    }

    pub fn trajectory_spec(&self) -> Result<TrajectorySpec, Error> {
        let t = &self.task;
        let source = match t.kind {
            TaskKind::Sinusoid => OrbitSource::Sinusoid {
                centers: t.centers,
                amplitudes: t.amplitudes,
                phase_shift: t.phase_shift,
            },
            TaskKind::Feature => {
                let pts = t.points.as_deref().unwrap_or_default();
                let arr: [[f64; 2]; 10] = pts
                    .try_into()
                    .map_err(|_| Error::Trajectory(format!("feature orbit needs 10 points, got {}", pts.len())))?;
                OrbitSource::Feature(FeatureVector(arr))
            }
        };
        let spec = TrajectorySpec {
            source,
            cycle_period: t.cycle_period,
            duration: self.refinement.duration,
            phase_offsets: t.phase_offsets,
        };
        spec.validate(&self.plant.limb)?;
        Ok(spec)
    }

    /// Settings that determine the babble phase and the maps it produces.
    pub fn same_babble_setup(&self, other: &ExperimentConfig) -> bool {
        self.seed == other.seed
            && self.plant == other.plant
            && self.babble == other.babble
            && self.network == other.network
    }
}
