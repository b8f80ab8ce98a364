//! Crate-level error and the process exit codes derived from it.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::evaluation::EvalError;
use crate::features::FeatureError;
use crate::geometry::GeometryError;
use crate::heatmap::HeatmapError;
use crate::labeling::LabelError;
use crate::landcover::LandCoverError;
use crate::models::ModelError;
use crate::synth::SynthError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    LandCover(#[from] LandCoverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_MODEL: i32 = 3;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for I/O, 2 for invalid input or configuration, 3 for model and
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Features(FeatureError::Io(_))
            | Error::Labels(LabelError::Io(_))
            | Error::Heatmap(HeatmapError::Io(_)) => EXIT_IO,
            Error::Config(_)
            | Error::LandCover(_)
            | Error::Geometry(_)
            | Error::Features(_)
            | Error::Labels(_)
            | Error::Dataset(_)
            | Error::Synth(_) => EXIT_VALIDATION,
            Error::Model(_) | Error::Evaluation(_) | Error::Heatmap(_) => EXIT_MODEL,
        }
    }
}
