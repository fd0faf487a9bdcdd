//! Simulated tendon-driven quadruped and the general-to-particular learning
//! loop that teaches it cyclical limb movements.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod inverse_map;
pub mod limb;
pub mod pipeline;
pub mod plant;
pub mod rundir;
pub mod trajectory;

pub use config::ExperimentConfig;
pub use error::{DynamicsError, Error, PlantError, Result, TrainError};
pub use experiment::Experiment;
pub use inverse_map::{Dataset, InverseMap, Phase, Scaler};
pub use limb::{default_limb_params, ActivationVector, LimbParams, LimbState, Vec2};
pub use pipeline::{RmseReport, TrialRecord};
pub use plant::{LimbId, Plant, PlantCommand, PlantObservation};
pub use rundir::RunDir;
pub use trajectory::{DesiredKinematics, TrajectorySpec};
