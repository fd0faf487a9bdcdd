use std::path::PathBuf;

use thiserror::Error;

use crate::plant::LimbId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("physics step {0} s is outside (0, 2 ms]")]
    InvalidTimestep(f64),
    #[error("non-finite limb state after step: q = {q:?}, dq = {dq:?}, ddq = {ddq:?}")]
    NonFinite { q: [f64; 2], dq: [f64; 2], ddq: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("limb {limb}: {source}")]
pub struct PlantError {
    pub limb: LimbId,
    #[source]
    pub source: DynamicsError,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training needs at least one sample")]
    EmptyDataset,
    #[error("dataset has {got} input channels, the map expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training setting: {0}")]
    InvalidSetting(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid limb parameters: {0}")]
    Params(String),
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("plant fault{}: {source}", refinement.map(|k| format!(" during refinement {k}")).unwrap_or_default())]
    Plant {
        refinement: Option<usize>,
        #[source]
        source: PlantError,
    },
    #[error("training fault{}: {source}", map.map(|m| format!(" in map {m}")).unwrap_or_default())]
    Training {
        map: Option<usize>,
        #[source]
        source: TrainError,
    },
    #[error("series length mismatch: {0}")]
    LengthMismatch(String),
    #[error("missing run artifacts in {dir}: {detail}")]
    MissingArtifacts { dir: PathBuf, detail: String },
    #[error("run directory {0} already holds this phase; pass --resume to continue it")]
    WouldOverwrite(PathBuf),
    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<PlantError> for Error {
    fn from(source: PlantError) -> Self {
        Error::Plant { refinement: None, source }
    }
}

impl From<TrainError> for Error {
    fn from(source: TrainError) -> Self {
        Error::Training { map: None, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
