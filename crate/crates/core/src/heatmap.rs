//! Probability heatmap `P[i,j] = clamp(f(V[i,j]), 0, 1)` and its PGM/CSV
//! renderings.

use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Scaler;
use crate::features::FeatureGrid;
use crate::landcover::GeoTransform;
use crate::models::{FittedModel, ModelFamily, Regressor};

pub const HEATMAP_CSV_HEADER: &str = "i,j,p";

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("{0} models expect standardized inputs but no scaler was supplied")]
    ScalerMissing(ModelFamily),
    #[error("{0} models consume raw features; refusing to apply a scaler")]
    ScalerUnexpected(ModelFamily),
    #[error("heatmap has no cells")]
    EmptyGrid,
    #[error("model output at cell ({i}, {j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("heatmap CSV line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    geo: GeoTransform,
}

impl ProbabilityGrid {
    /// Values outside `[0, 1]` are clamped.
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>, geo: GeoTransform) -> Result<Self, HeatmapError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(HeatmapError::EmptyGrid);
        }
        if values.len() != n_rows * n_cols {
            return Err(HeatmapError::MalformedCsv {
                line: 0,
                reason: format!("{} values for a {n_rows}x{n_cols} grid", values.len()),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(HeatmapError::NonFinite { i: k / n_cols, j: k % n_cols });
        }
        let values = values.into_iter().map(clamp_probability).collect();
        Ok(ProbabilityGrid { n_rows, n_cols, values, geo })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn geo(&self) -> &GeoTransform {
        &self.geo
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (i < self.n_rows && j < self.n_cols).then(|| self.values[i * self.n_cols + j])
    }
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// Scores every cell of `v`, including cells that had no training label.
pub fn generate_heatmap(model: &Regressor, v: &FeatureGrid, scaler: Option<&Scaler>) -> Result<ProbabilityGrid, HeatmapError> {
    let family = model.family();
    match (family.needs_scaling(), scaler) {
        (true, None) => return Err(HeatmapError::ScalerMissing(family)),
        (false, Some(_)) => return Err(HeatmapError::ScalerUnexpected(family)),
        _ => {}
    }
    let raw: Vec<f64> = v
        .vectors()
        .par_iter()
        .map(|f| {
            let x = f.to_array();
            match scaler {
                Some(s) => model.predict(&s.transform(&x)),
                None => model.predict(&x),
            }
        })
        .collect();
    let (n_rows, n_cols) = v.dims();
    ProbabilityGrid::new(n_rows, n_cols, raw, *v.geo())
}

pub fn generate_heatmap_for(model: &FittedModel, v: &FeatureGrid) -> Result<ProbabilityGrid, HeatmapError> {
    generate_heatmap(&model.regressor, v, model.scaler.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    /// High probability renders dark.
    #[default]
    DarkHigh,
    LightHigh,
}

/// `round(255 * (1 - p))` with halves rounded up, or `round(255 * p)` for
/// [`Polarity::LightHigh`].
pub fn gray_level(p: f64, polarity: Polarity) -> u8 {
    let level = match polarity {
        Polarity::DarkHigh => 1.0 - p,
        Polarity::LightHigh => p,
    };
    (255.0 * level + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn pgm_header(p: &ProbabilityGrid) -> String {
    format!("P5\n{} {}\n255\n", p.n_cols, p.n_rows)
}

pub fn write_pgm<W: Write>(p: &ProbabilityGrid, polarity: Polarity, mut sink: W) -> io::Result<()> {
    sink.write_all(pgm_header(p).as_bytes())?;
    let pixels: Vec<u8> = p.values.iter().map(|&v| gray_level(v, polarity)).collect();
    sink.write_all(&pixels)?;
    sink.flush()
}

pub fn write_csv<W: Write>(p: &ProbabilityGrid, mut sink: W) -> io::Result<()> {
    writeln!(sink, "{HEATMAP_CSV_HEADER}")?;
    for (k, v) in p.values.iter().enumerate() {
        writeln!(sink, "{},{},{v:?}", k / p.n_cols, k % p.n_cols)?;
    }
    sink.flush()
}

/// Reads a heatmap CSV written by [`write_csv`]. The file carries no
/// georeference, so the result gets `geo`.
pub fn read_csv<R: BufRead>(source: R, geo: GeoTransform) -> Result<ProbabilityGrid, HeatmapError> {
    let malformed = |line: usize, reason: String| HeatmapError::MalformedCsv { line, reason };
    let mut lines = source.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(HEATMAP_CSV_HEADER) {
        return Err(malformed(1, format!("expected header {HEATMAP_CSV_HEADER:?}")));
    }
    let mut cells = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let n = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim().split(',').collect();
        let [i, j, v] = parts.as_slice() else {
            return Err(malformed(n, format!("expected 3 fields, found {}", parts.len())));
        };
        let i: usize = i.parse().map_err(|_| malformed(n, format!("bad row index {i:?}")))?;
        let j: usize = j.parse().map_err(|_| malformed(n, format!("bad column index {j:?}")))?;
        let v: f64 = v.parse().map_err(|_| malformed(n, format!("bad probability {v:?}")))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(malformed(n, format!("probability {v} outside [0, 1]")));
        }
        cells.push((i, j, v, n));
    }
    if cells.is_empty() {
        return Err(HeatmapError::EmptyGrid);
    }
    let n_rows = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let n_cols = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    if cells.len() != n_rows * n_cols {
        return Err(malformed(0, format!("{} cells do not fill a {n_rows}x{n_cols} grid", cells.len())));
    }
    let mut values = vec![f64::NAN; n_rows * n_cols];
    for (i, j, v, n) in cells {
        let slot = &mut values[i * n_cols + j];
        if !slot.is_nan() {
            return Err(malformed(n, format!("duplicate cell ({i}, {j})")));
        }
        *slot = v;
    }
    ProbabilityGrid::new(n_rows, n_cols, values, geo)
}
