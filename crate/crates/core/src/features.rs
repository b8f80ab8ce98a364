//! The feature grid `V`.
//!
//! Each cell of `V` summarizes one `g x g` window of the land-cover raster as
//! `(a_h, a_t, a_g, d_f, d_w)`: the built-up, tree and grass fractions of the
//! window, and the Euclidean distance (in `V` cells) to the nearest cell whose
//! window holds trees or wetland.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::geometry::{self, BooleanGrid, GeometryError};
use crate::landcover::{GeoTransform, LandCoverGrid, SemanticClass};

pub const N_FEATURES: usize = 5;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["a_h", "a_t", "a_g", "d_f", "d_w"];
pub const FEATURE_CSV_HEADER: &str = "i,j,a_h,a_t,a_g,d_f,d_w";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("cell ({i}, {j}) outside {n_rows}x{n_cols} feature grid")]
    OutOfBounds {
        i: usize,
        j: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("minimum tree pixel count must be at least 1")]
    InvalidThreshold,
    #[error("feature CSV line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub a_h: f64,
    pub a_t: f64,
    pub a_g: f64,
    pub d_f: f64,
    pub d_w: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; N_FEATURES] {
        [self.a_h, self.a_t, self.a_g, self.d_f, self.d_w]
    }

    pub fn from_array(v: [f64; N_FEATURES]) -> Self {
        FeatureVector {
            a_h: v[0],
            a_t: v[1],
            a_g: v[2],
            d_f: v[3],
            d_w: v[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl From<[f64; N_FEATURES]> for FeatureVector {
    fn from(v: [f64; N_FEATURES]) -> Self {
        FeatureVector::from_array(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureOptions {
    pub g: usize,
    /// Tree pixels a window needs before it counts as forest for `d_f`.
    pub min_tree_pixels: u32,
}

impl FeatureOptions {
    pub fn new(g: usize) -> Self {
        FeatureOptions { g, min_tree_pixels: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    n_rows: usize,
    n_cols: usize,
    g: usize,
    geo: GeoTransform,
    vectors: Vec<FeatureVector>,
    /// No window contained forest; every `d_f` is the sentinel.
    pub no_forest: bool,
    /// No window contained wetland; every `d_w` is the sentinel.
    pub no_wetland: bool,
}

impl FeatureGrid {
    /// Assembles a grid from precomputed vectors (used by CSV import and tests).
    pub fn from_vectors(
        n_rows: usize,
        n_cols: usize,
        g: usize,
        geo: GeoTransform,
        vectors: Vec<FeatureVector>,
    ) -> Result<Self, FeatureError> {
        if n_rows == 0 || n_cols == 0 || vectors.len() != n_rows * n_cols {
            return Err(GeometryError::DimensionMismatch {
                len: vectors.len(),
                n_rows,
                n_cols,
            }
            .into());
        }
        Ok(FeatureGrid {
            n_rows,
            n_cols,
            g,
            geo,
            vectors,
            no_forest: false,
            no_wetland: false,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn g(&self) -> usize {
        self.g
    }

    /// Transform of `V` itself (cell size `g` pixels).
    pub fn geo(&self) -> &GeoTransform {
        &self.geo
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn feature_at(&self, i: usize, j: usize) -> Result<FeatureVector, FeatureError> {
        if i >= self.n_rows || j >= self.n_cols {
            return Err(FeatureError::OutOfBounds {
                i,
                j,
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        Ok(self.vectors[i * self.n_cols + j])
    }

    /// Iterates `((i, j), vector)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize), &FeatureVector)> + '_ {
        let cols = self.n_cols;
        self.vectors.iter().enumerate().map(move |(k, v)| ((k / cols, k % cols), v))
    }
}

pub fn build_feature_grid(grid: &LandCoverGrid, g: usize) -> Result<FeatureGrid, FeatureError> {
    build_feature_grid_with(grid, FeatureOptions::new(g))
}

pub fn build_feature_grid_with(grid: &LandCoverGrid, opts: FeatureOptions) -> Result<FeatureGrid, FeatureError> {
    if opts.min_tree_pixels == 0 {
        return Err(FeatureError::InvalidThreshold);
    }
    let g = opts.g;
    let (n_rows, n_cols, counts) = geometry::window_class_counts(grid, g)?;
    let area = (g * g) as f64;

    let forest = BooleanGrid::new(
        n_rows,
        n_cols,
        counts
            .iter()
            .map(|c| c[SemanticClass::Trees.index()] >= opts.min_tree_pixels)
            .collect(),
    )?;
    let wetland = BooleanGrid::new(
        n_rows,
        n_cols,
        counts.iter().map(|c| c[SemanticClass::Wetland.index()] > 0).collect(),
    )?;
    let d_f = geometry::exact_distance_transform(&forest);
    let d_w = geometry::exact_distance_transform(&wetland);

    let vectors = counts
        .iter()
        .enumerate()
        .map(|(k, c)| FeatureVector {
            a_h: c[SemanticClass::BuiltUp.index()] as f64 / area,
            a_t: c[SemanticClass::Trees.index()] as f64 / area,
            a_g: c[SemanticClass::Grass.index()] as f64 / area,
            d_f: d_f.values[k],
            d_w: d_w.values[k],
        })
        .collect();

    Ok(FeatureGrid {
        n_rows,
        n_cols,
        g,
        geo: grid.geo().coarsened(g),
        vectors,
        no_forest: d_f.no_source,
        no_wetland: d_w.no_source,
    })
}

/// Writes `i,j,a_h,a_t,a_g,d_f,d_w` rows in row-major order. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn export_features<W: Write>(v: &FeatureGrid, mut sink: W) -> io::Result<()> {
    writeln!(sink, "{FEATURE_CSV_HEADER}")?;
    for ((i, j), f) in v.cells() {
        writeln!(sink, "{i},{j},{},{},{},{},{}", f.a_h, f.a_t, f.a_g, f.d_f, f.d_w)?;
    }
    sink.flush()
}

/// Reads a file written by [`export_features`]. The result carries no
/// geotransform (identity) and window size 0 since the CSV does not store them.
pub fn import_features<R: BufRead>(source: R) -> Result<FeatureGrid, FeatureError> {
    let mut rows: Vec<(usize, usize, FeatureVector)> = Vec::new();
    let mut lines = source.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != FEATURE_CSV_HEADER {
        return Err(FeatureError::MalformedCsv {
            line: 1,
            reason: format!("expected header {FEATURE_CSV_HEADER:?}"),
        });
    }
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| FeatureError::MalformedCsv { line: lineno, reason };
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", fields.len())));
        }
        let i = fields[0].parse().map_err(|_| bad(format!("bad row index {:?}", fields[0])))?;
        let j = fields[1].parse().map_err(|_| bad(format!("bad column index {:?}", fields[1])))?;
        let mut v = [0.0; N_FEATURES];
        for (slot, raw) in v.iter_mut().zip(&fields[2..]) {
            *slot = raw.parse().map_err(|_| bad(format!("bad value {raw:?}")))?;
        }
        rows.push((i, j, v.into()));
    }
    let n_rows = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let n_cols = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != n_rows * n_cols {
        return Err(FeatureError::MalformedCsv {
            line: 0,
            reason: format!("{} rows do not tile a {n_rows}x{n_cols} grid", rows.len()),
        });
    }
    let mut vectors = vec![None; n_rows * n_cols];
    for (i, j, v) in rows {
        let slot = &mut vectors[i * n_cols + j];
        if slot.is_some() {
            return Err(FeatureError::MalformedCsv {
                line: 0,
                reason: format!("duplicate cell ({i}, {j})"),
            });
        }
        *slot = Some(v);
    }
    let vectors = vectors.into_iter().map(|v| v.expect("tiled")).collect();
    FeatureGrid::from_vectors(n_rows, n_cols, 0, GeoTransform::default(), vectors)
}
