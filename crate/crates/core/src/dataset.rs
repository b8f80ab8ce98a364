//! Seeded train/validation/test splitting and feature standardization.

use std::io::{self, Write};

use thiserror::Error;

use crate::features::N_FEATURES;
use crate::labeling::LabeledSet;
use crate::rng::{self, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("need at least 5 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("cannot fit a scaler on an empty set")]
    EmptySet,
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(DatasetError::InvalidFractions(format!("{fracs:?} must all be positive")));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidFractions(format!("{fracs:?} must sum to 1")));
        }
        Ok(())
    }

    /// `(floor(train * n), floor(val * n), remainder)`.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = (self.train_frac * n as f64).floor() as usize;
        let val = (self.val_frac * n as f64).floor() as usize;
        (train, val, n - train - val)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(0)
    }
}

/// Row indices of each part, in shuffled order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with the split stream of `spec.seed` (see [`crate::rng`])
/// and slices it into contiguous parts.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices, DatasetError> {
    spec.validate()?;
    if n < 5 {
        return Err(DatasetError::TooFewRows(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(spec.seed, Stream::Split, 0), &mut order);
    let (n_train, n_val, _) = spec.sizes(n);
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok(SplitIndices { train: order, val, test })
}

pub fn split(set: &LabeledSet, spec: &SplitSpec) -> Result<(LabeledSet, LabeledSet, LabeledSet), DatasetError> {
    let idx = split_indices(set.len(), spec)?;
    Ok((set.subset(&idx.train), set.subset(&idx.val), set.subset(&idx.test)))
}

/// Audit file: one `index,part` line per row.
pub fn write_split_indices<W: Write>(idx: &SplitIndices, mut sink: W) -> io::Result<()> {
    writeln!(sink, "index,part")?;
    for (part, rows) in [("train", &idx.train), ("val", &idx.val), ("test", &idx.test)] {
        for k in rows {
            writeln!(sink, "{k},{part}")?;
        }
    }
    sink.flush()
}

/// Per-feature standardization fitted on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
    /// Features whose spread was zero and whose std was replaced by 1.
    pub constant: [bool; N_FEATURES],
    pub fitted_on: String,
}

impl Scaler {
    pub fn identity() -> Self {
        Scaler {
            mean: [0.0; N_FEATURES],
            std: [1.0; N_FEATURES],
            constant: [false; N_FEATURES],
            fitted_on: "identity".into(),
        }
    }

    pub fn has_constant_feature(&self) -> bool {
        self.constant.iter().any(|&c| c)
    }

    pub fn transform(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|k| (x[k] - self.mean[k]) / self.std[k])
    }

    pub fn inverse(&self, z: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|k| z[k] * self.std[k] + self.mean[k])
    }
}

/// Two-pass mean and population standard deviation per feature.
pub fn fit_scaler(rows: &[[f64; N_FEATURES]], fitted_on: &str) -> Result<Scaler, DatasetError> {
    if rows.is_empty() {
        return Err(DatasetError::EmptySet);
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; N_FEATURES];
    for r in rows {
        for k in 0..N_FEATURES {
            mean[k] += r[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; N_FEATURES];
    for r in rows {
        for k in 0..N_FEATURES {
            var[k] += (r[k] - mean[k]).powi(2);
        }
    }
    let mut std = [1.0; N_FEATURES];
    let mut constant = [false; N_FEATURES];
    for k in 0..N_FEATURES {
        if rows.iter().all(|r| r[k] == rows[0][k]) {
            constant[k] = true;
            mean[k] = rows[0][k];
        } else {
            std[k] = (var[k] / n).sqrt();
        }
    }
    if constant.iter().any(|&c| c) {
        log::warn!("constant features {constant:?} get unit scale");
    }
    Ok(Scaler {
        mean,
        std,
        constant,
        fitted_on: fitted_on.to_string(),
    })
}

pub fn apply_scaler(scaler: &Scaler, rows: &[[f64; N_FEATURES]]) -> Vec<[f64; N_FEATURES]> {
    rows.iter().map(|r| scaler.transform(r)).collect()
}
