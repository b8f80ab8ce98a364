//! Regressors for the poaching-probability function `f`.
//!
//! Trees and forests consume raw features; kernel ridge and the MLP expect
//! standardized inputs, so their [`FittedModel`] carries the [`Scaler`] that
//! was fitted on the training split.

mod forest;
mod kernel_ridge;
mod mlp;
mod serial;
mod tree;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::Scaler;
use crate::features::N_FEATURES;

pub use forest::{fit_forest, pairwise_sum, ForestParams, RandomForest};
pub use kernel_ridge::{default_gamma, fit_kernel_ridge, KernelRidge, KernelRidgeParams};
pub use mlp::{fit_mlp, Layer, Mlp, MlpFit, MlpParams};
pub use serial::{deserialize, serialize, FORMAT_VERSION};
pub use tree::{fit_tree, DecisionTree, Node, TreeParams};

pub type Row = [f64; N_FEATURES];

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("cannot fit on zero rows")]
    EmptyRows,
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("kernel system is not positive definite")]
    SingularSystem,
    #[error("{rows} rows exceed the kernel ridge cap of {cap} and subsampling is disabled")]
    TooManyRows { rows: usize, cap: usize },
    #[error("loss became non-finite at iteration {iteration}; lower the learning rate")]
    NonFiniteLoss { iteration: usize },
    #[error("model has not been fitted")]
    UnfittedModel,
    #[error("unknown model format version {0:?}")]
    UnknownVersion(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
}

pub(crate) fn check_xy(x: &[Row], y: &[f64]) -> Result<(), ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch {
            features: x.len(),
            labels: y.len(),
        });
    }
    if x.is_empty() {
        return Err(ModelError::EmptyRows);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    RandomForest,
    KernelRidge,
    Mlp,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::RandomForest => "random_forest",
            ModelFamily::KernelRidge => "kernel_ridge",
            ModelFamily::Mlp => "mlp",
        }
    }

    /// Whether inputs must be standardized before fitting and prediction.
    pub fn needs_scaling(self) -> bool {
        !matches!(self, ModelFamily::RandomForest)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random_forest" | "forest" | "rf" => Ok(ModelFamily::RandomForest),
            "kernel_ridge" | "krr" => Ok(ModelFamily::KernelRidge),
            "mlp" => Ok(ModelFamily::Mlp),
            other => Err(ModelError::InvalidParams(format!("unknown model family {other:?}"))),
        }
    }
}

/// Anything that maps a feature row to a raw (unclamped) score.
pub trait Predictor: Sync {
    fn predict_row(&self, x: &Row) -> f64;

    fn predict_rows(&self, xs: &[Row]) -> Vec<f64> {
        xs.iter().map(|x| self.predict_row(x)).collect()
    }
}

impl<F: Fn(&Row) -> f64 + Sync> Predictor for F {
    fn predict_row(&self, x: &Row) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regressor {
    RandomForest(RandomForest),
    KernelRidge(KernelRidge),
    Mlp(Mlp),
}

impl Regressor {
    pub fn family(&self) -> ModelFamily {
        match self {
            Regressor::RandomForest(_) => ModelFamily::RandomForest,
            Regressor::KernelRidge(_) => ModelFamily::KernelRidge,
            Regressor::Mlp(_) => ModelFamily::Mlp,
        }
    }

    /// Raw model output on an input already in the model's feature space.
    pub fn predict(&self, x: &Row) -> f64 {
        match self {
            Regressor::RandomForest(m) => m.predict(x),
            Regressor::KernelRidge(m) => m.predict(x),
            Regressor::Mlp(m) => m.predict(x),
        }
    }
}

impl Predictor for Regressor {
    fn predict_row(&self, x: &Row) -> f64 {
        self.predict(x)
    }
}

/// A regressor bundled with the input standardization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub regressor: Regressor,
    pub scaler: Option<Scaler>,
}

impl FittedModel {
    pub fn new(regressor: Regressor, scaler: Option<Scaler>) -> Self {
        FittedModel { regressor, scaler }
    }

    pub fn family(&self) -> ModelFamily {
        self.regressor.family()
    }

    /// Prediction on unscaled features.
    pub fn predict(&self, x: &Row) -> f64 {
        match &self.scaler {
            Some(s) => self.regressor.predict(&s.transform(x)),
            None => self.regressor.predict(x),
        }
    }
}

impl Predictor for FittedModel {
    fn predict_row(&self, x: &Row) -> f64 {
        self.predict(x)
    }
}
