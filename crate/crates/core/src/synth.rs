//! Synthetic land-cover scenarios with a known poaching-probability
//! function, for benchmarking the pipeline without field data.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureGrid, FeatureVector};
use crate::labeling::{IncidentSet, LabeledRow, LabeledSet};
use crate::landcover::{ClassMap, GeoTransform, LandCoverGrid, SemanticClass};
use crate::rng::{self, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error("cannot draw {requested} incidents from {cells} cells")]
    InvalidCount { requested: usize, cells: usize },
    #[error("ground truth covers {truth} cells but the feature grid has {grid}")]
    GridMismatch { truth: usize, grid: usize },
}

/// Number and side-length range (pixels) of randomly placed blobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub count: usize,
    pub min_size: usize,
    pub max_size: usize,
}

impl BlobSpec {
    pub const NONE: BlobSpec = BlobSpec {
        count: 0,
        min_size: 1,
        max_size: 1,
    };

    pub fn new(count: usize, min_size: usize, max_size: usize) -> Self {
        BlobSpec { count, min_size, max_size }
    }
}

/// A blob at a fixed position, painted after the random ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blob {
    pub class: SemanticClass,
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub ellipse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthFunction {
    /// `clamp(0.8 * exp(-3 a_h) * exp(-d_w / 50) + 0.1, 0, 1)`
    #[default]
    Default,
}

impl TruthFunction {
    pub fn eval(self, v: &FeatureVector) -> f64 {
        match self {
            TruthFunction::Default => (0.8 * (-3.0 * v.a_h).exp() * (-v.d_w / 50.0).exp() + 0.1).clamp(0.0, 1.0),
        }
    }
}

pub fn default_true_function() -> TruthFunction {
    TruthFunction::Default
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub n_rows: usize,
    pub n_cols: usize,
    pub g: usize,
    /// Set from the run's top-level seed rather than read from config.
    #[serde(skip)]
    pub seed: u64,
    pub built_up: BlobSpec,
    pub trees: BlobSpec,
    pub grass: BlobSpec,
    pub wetland: BlobSpec,
    pub blobs: Vec<Blob>,
    pub n_incidents: usize,
    pub truth: TruthFunction,
    pub noise_sigma: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            n_rows: 2000,
            n_cols: 2000,
            g: 20,
            seed: 0,
            built_up: BlobSpec::new(60, 40, 260),
            trees: BlobSpec::new(40, 60, 300),
            grass: BlobSpec::new(30, 100, 500),
            wetland: BlobSpec::new(5, 40, 160),
            blobs: Vec::new(),
            n_incidents: 25,
            truth: TruthFunction::Default,
            noise_sigma: 0.05,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.n_rows == 0 || self.n_cols == 0 {
            return bad("raster dimensions must be positive".into());
        }
        if self.g == 0 || !self.n_rows.is_multiple_of(self.g) || !self.n_cols.is_multiple_of(self.g) {
            return bad(format!("{}x{} raster is not divisible by g = {}", self.n_rows, self.n_cols, self.g));
        }
        if self.n_incidents == 0 {
            return bad("n_incidents must be at least 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be a nonnegative number, got {}", self.noise_sigma));
        }
        for (name, s) in self.specs() {
            if s.count > 0 && (s.min_size == 0 || s.min_size > s.max_size) {
                return bad(format!("{name} blob sizes must satisfy 1 <= min_size <= max_size"));
            }
        }
        for b in &self.blobs {
            if b.height == 0 || b.width == 0 || b.row + b.height > self.n_rows || b.col + b.width > self.n_cols {
                return bad(format!("blob at ({}, {}) does not fit the raster", b.row, b.col));
            }
        }
        Ok(())
    }

    /// Random blob specs in painting order; later classes overwrite earlier ones.
    fn specs(&self) -> [(SemanticClass, BlobSpec); 4] {
        [
            (SemanticClass::Grass, self.grass),
            (SemanticClass::Trees, self.trees),
            (SemanticClass::Wetland, self.wetland),
            (SemanticClass::BuiltUp, self.built_up),
        ]
    }

    pub fn v_dims(&self) -> (usize, usize) {
        (self.n_rows / self.g, self.n_cols / self.g)
    }
}

fn paint(classes: &mut [SemanticClass], n_cols: usize, b: &Blob) {
    let (cy, cx) = ((b.height as f64 - 1.0) / 2.0, (b.width as f64 - 1.0) / 2.0);
    let (ry, rx) = (b.height as f64 / 2.0, b.width as f64 / 2.0);
    for r in 0..b.height {
        for c in 0..b.width {
            if b.ellipse {
                let (dy, dx) = ((r as f64 - cy) / ry, (c as f64 - cx) / rx);
                if dy * dy + dx * dx > 1.0 {
                    continue;
                }
            }
            classes[(b.row + r) * n_cols + b.col + c] = b.class;
        }
    }
}

/// WorldCover-coded raster of class blobs on an Other background, drawn
/// from `rng::stream(seed, Stream::Synth, 0)`.
pub fn generate_landcover(params: &ScenarioParams) -> Result<LandCoverGrid, SynthError> {
    params.validate()?;
    let (n_rows, n_cols) = (params.n_rows, params.n_cols);
    let mut classes = vec![SemanticClass::Other; n_rows * n_cols];
    let mut r = rng::stream(params.seed, Stream::Synth, 0);
    let size = |r: &mut _, s: &BlobSpec, limit: usize| (s.min_size + rng::below(r, s.max_size - s.min_size + 1)).min(limit);
    for (class, spec) in params.specs() {
        for _ in 0..spec.count {
            let height = size(&mut r, &spec, n_rows);
            let width = size(&mut r, &spec, n_cols);
            let blob = Blob {
                class,
                row: rng::below(&mut r, n_rows - height + 1),
                col: rng::below(&mut r, n_cols - width + 1),
                height,
                width,
                ellipse: rng::below(&mut r, 2) == 1,
            };
            paint(&mut classes, n_cols, &blob);
        }
    }
    for b in &params.blobs {
        paint(&mut classes, n_cols, b);
    }
    let map = ClassMap::worldcover();
    let codes = classes
        .iter()
        .map(|&c| map.code_for(c).expect("worldcover maps every class"))
        .collect();
    // 10 m pixels near the Okavango delta.
    let pixel = 1.0 / 11_132.0;
    let geo = GeoTransform::from_lower_left(22.5, -19.5, pixel, n_rows).map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    LandCoverGrid::new(n_rows, n_cols, codes, geo, map).map_err(|e| SynthError::InvalidParams(e.to_string()))
}

/// Per-cell values of a truth function over `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dims: (usize, usize),
    pub values: Vec<f64>,
}

impl GroundTruth {
    pub fn evaluate(function: TruthFunction, v: &FeatureGrid) -> GroundTruth {
        GroundTruth {
            dims: v.dims(),
            values: v.vectors().iter().map(|f| function.eval(f)).collect(),
        }
    }

    pub fn from_values(dims: (usize, usize), values: Vec<f64>) -> Result<GroundTruth, SynthError> {
        if values.len() != dims.0 * dims.1 {
            return Err(SynthError::GridMismatch {
                truth: values.len(),
                grid: dims.0 * dims.1,
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(SynthError::InvalidParams("truth values must lie in [0, 1]".into()));
        }
        Ok(GroundTruth { dims, values })
    }
}

/// Draws `n` distinct cells with probability proportional to the truth
/// value (Efraimidis-Spirakis keys `ln(u) / w`, largest `n` kept), from
/// `rng::stream(seed, Stream::Synth, 1)`.
pub fn plant_incidents(truth: &GroundTruth, n: usize, seed: u64) -> Result<IncidentSet, SynthError> {
    let cells = truth.values.len();
    if n == 0 || n > cells {
        return Err(SynthError::InvalidCount { requested: n, cells });
    }
    let mut r = rng::stream(seed, Stream::Synth, 1);
    let mut keyed: Vec<(f64, usize)> = truth
        .values
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            // 1 - unit lies in (0, 1], so the log is finite.
            let u = 1.0 - rng::unit(&mut r);
            let key = if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY };
            (key, k)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let n_cols = truth.dims.1;
    let chosen = keyed[..n].iter().map(|&(_, k)| (k / n_cols, k % n_cols));
    IncidentSet::from_cells(chosen, truth.dims).map_err(|e| SynthError::InvalidParams(e.to_string()))
}

/// `clamp(truth + N(0, sigma), 0, 1)` per cell, from
/// `rng::stream(seed, Stream::Noise, 0)`.
pub fn noisy_truth(truth: &GroundTruth, sigma: f64, seed: u64) -> Result<Vec<f64>, SynthError> {
    let normal = Normal::new(0.0, sigma).map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    let mut r = rng::stream(seed, Stream::Noise, 0);
    Ok(truth
        .values
        .iter()
        .map(|&t| (t + normal.sample(&mut r)).clamp(0.0, 1.0))
        .collect())
}

/// Every cell of `v` labeled with its noisy truth value.
pub fn truth_labels(v: &FeatureGrid, truth: &GroundTruth, sigma: f64, seed: u64) -> Result<LabeledSet, SynthError> {
    if truth.values.len() != v.len() {
        return Err(SynthError::GridMismatch {
            truth: truth.values.len(),
            grid: v.len(),
        });
    }
    let labels = noisy_truth(truth, sigma, seed)?;
    let rows = v
        .cells()
        .zip(labels)
        .map(|((cell, f), label)| LabeledRow {
            cell,
            features: *f,
            label,
            distance: None,
        })
        .collect();
    Ok(LabeledSet { rows })
}

/// A generated raster together with its features, truth and incidents.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub landcover: LandCoverGrid,
    pub features: FeatureGrid,
    pub truth: GroundTruth,
    pub incidents: IncidentSet,
}

pub fn generate_scenario(params: &ScenarioParams) -> Result<Scenario, SynthError> {
    let landcover = generate_landcover(params)?;
    let features =
        crate::features::build_feature_grid(&landcover, params.g).map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    let truth = GroundTruth::evaluate(params.truth, &features);
    let incidents = plant_incidents(&truth, params.n_incidents, params.seed)?;
    Ok(Scenario {
        params: params.clone(),
        landcover,
        features,
        truth,
        incidents,
    })
}

/// `i,j,truth` rows in row-major order.
pub fn write_truth<W: std::io::Write>(truth: &GroundTruth, mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "i,j,truth")?;
    for (k, v) in truth.values.iter().enumerate() {
        writeln!(sink, "{},{},{v:?}", k / truth.dims.1, k % truth.dims.1)?;
    }
    sink.flush()
}
