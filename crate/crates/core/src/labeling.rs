//! Incident ingestion and distance-decayed label synthesis.
//!
//! A cell at Chebyshev distance `d` from the nearest incident gets label
//! `1 - decay_step * d` while `d <= positive_radius`, label `0` once
//! `d > zero_radius`, and is left out of the training set in between.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::features::{FeatureGrid, FeatureVector, N_FEATURES};
use crate::geometry;
use crate::landcover::GeoTransform;

pub const LABEL_CSV_HEADER: &str = "i,j,a_h,a_t,a_g,d_f,d_w,label";

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("incident CSV line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("incident on line {line} lies outside the raster extent")]
    OutOfExtent { line: usize },
    #[error("no incidents to label from")]
    EmptyIncidents,
    #[error("invalid label policy: {0}")]
    InvalidPolicy(String),
    #[error("label CSV line {line}: {reason}")]
    MalformedLabels { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Distinct incident cells of `V`, in first-seen order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IncidentSet {
    pub cells: Vec<(usize, usize)>,
    /// `(lat, lon)` of each accepted input row when read from coordinates.
    pub coordinates: Vec<(f64, f64)>,
    /// Input rows that landed on an already-seen cell.
    pub duplicates: usize,
}

impl IncidentSet {
    /// Collapses duplicate cells; fails if any cell lies outside `dims`.
    pub fn from_cells(cells: impl IntoIterator<Item = (usize, usize)>, dims: (usize, usize)) -> Result<Self, LabelError> {
        let mut set = IncidentSet::default();
        let mut seen = HashSet::new();
        for (k, (i, j)) in cells.into_iter().enumerate() {
            if i >= dims.0 || j >= dims.1 {
                return Err(LabelError::OutOfExtent { line: k + 1 });
            }
            if seen.insert((i, j)) {
                set.cells.push((i, j));
            } else {
                set.duplicates += 1;
            }
        }
        if set.duplicates > 0 {
            log::warn!("{} duplicate incident cells collapsed", set.duplicates);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Parses an incident CSV with either an `i,j` header (cells of `V`) or a
/// `lat,lon` header (mapped through the raster transform `geo`, then divided
/// by the window size `g`). `dims` are the dimensions of `V`.
pub fn parse_incidents(text: &str, geo: &GeoTransform, g: usize, dims: (usize, usize)) -> Result<IncidentSet, LabelError> {
    #[derive(PartialEq)]
    enum Mode {
        Cells,
        LatLon,
    }
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(LabelError::MalformedRow {
        line: 1,
        reason: "empty file".into(),
    })?;
    let header: Vec<String> = header.split(',').map(|h| h.trim().to_ascii_lowercase()).collect();
    let mode = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["i", "j"] => Mode::Cells,
        ["lat", "lon"] => Mode::LatLon,
        _ => {
            return Err(LabelError::MalformedRow {
                line: 1,
                reason: format!("expected header `i,j` or `lat,lon`, got {:?}", header.join(",")),
            })
        }
    };
    if g == 0 {
        return Err(LabelError::InvalidPolicy("window size must be at least 1".into()));
    }

    let pixel_dims = (dims.0 * g, dims.1 * g);
    let mut cells = Vec::new();
    let mut coordinates = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(LabelError::MalformedRow {
                line: lineno,
                reason: format!("expected 2 fields, got {}", fields.len()),
            });
        }
        let cell = match mode {
            Mode::Cells => {
                let parse = |s: &str| {
                    s.parse::<usize>().map_err(|_| LabelError::MalformedRow {
                        line: lineno,
                        reason: format!("bad cell index {s:?}"),
                    })
                };
                (parse(fields[0])?, parse(fields[1])?)
            }
            Mode::LatLon => {
                let parse = |s: &str| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| LabelError::MalformedRow {
                            line: lineno,
                            reason: format!("bad coordinate {s:?}"),
                        })
                };
                let (lat, lon) = (parse(fields[0])?, parse(fields[1])?);
                let (r, c) = geo
                    .pixel_of(lat, lon, pixel_dims.0, pixel_dims.1)
                    .ok_or(LabelError::OutOfExtent { line: lineno })?;
                coordinates.push((lat, lon));
                (r / g, c / g)
            }
        };
        if cell.0 >= dims.0 || cell.1 >= dims.1 {
            return Err(LabelError::OutOfExtent { line: lineno });
        }
        cells.push(cell);
    }
    let mut set = IncidentSet::from_cells(cells, dims)?;
    set.coordinates = coordinates;
    Ok(set)
}

/// Writes incident cells as an `i,j` CSV.
pub fn write_incidents<W: Write>(set: &IncidentSet, mut sink: W) -> io::Result<()> {
    writeln!(sink, "i,j")?;
    for (i, j) in &set.cells {
        writeln!(sink, "{i},{j}")?;
    }
    sink.flush()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelPolicy {
    pub decay_step: f64,
    pub positive_radius: u32,
    pub zero_radius: u32,
}

impl Default for LabelPolicy {
    fn default() -> Self {
        LabelPolicy {
            decay_step: 0.1,
            positive_radius: 9,
            zero_radius: 400,
        }
    }
}

impl LabelPolicy {
    pub fn validate(&self) -> Result<(), LabelError> {
        if !(self.decay_step > 0.0 && self.decay_step.is_finite()) {
            return Err(LabelError::InvalidPolicy(format!("decay step {} must be positive", self.decay_step)));
        }
        if self.positive_radius >= self.zero_radius {
            return Err(LabelError::InvalidPolicy(format!(
                "positive radius {} must be below zero radius {}",
                self.positive_radius, self.zero_radius
            )));
        }
        if self.decay_step * self.positive_radius as f64 >= 1.0 {
            return Err(LabelError::InvalidPolicy(format!(
                "decay step {} x positive radius {} reaches zero inside the positive band",
                self.decay_step, self.positive_radius
            )));
        }
        Ok(())
    }

    /// Label at Chebyshev distance `d`, or `None` inside the exclusion band.
    pub fn label_for(&self, d: u32) -> Option<f64> {
        if d == 0 {
            Some(1.0)
        } else if d <= self.positive_radius {
            Some(1.0 - self.decay_step * d as f64)
        } else if d > self.zero_radius {
            Some(0.0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledRow {
    pub cell: (usize, usize),
    pub features: FeatureVector,
    pub label: f64,
    /// Chebyshev distance to the nearest incident when it is known.
    pub distance: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    pub rows: Vec<LabeledRow>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self) -> Vec<[f64; N_FEATURES]> {
        self.rows.iter().map(|r| r.features.to_array()).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            rows: indices.iter().map(|&k| self.rows[k]).collect(),
        }
    }
}

/// Labels every cell of `v` by its distance to the nearest incident, in
/// row-major order, skipping the exclusion band.
pub fn synthesize_labels(v: &FeatureGrid, incidents: &IncidentSet, policy: &LabelPolicy) -> Result<LabeledSet, LabelError> {
    policy.validate()?;
    if incidents.is_empty() {
        return Err(LabelError::EmptyIncidents);
    }
    for (k, &(i, j)) in incidents.cells.iter().enumerate() {
        if i >= v.n_rows() || j >= v.n_cols() {
            return Err(LabelError::OutOfExtent { line: k + 1 });
        }
    }
    let rings = geometry::chebyshev_rings(v.dims(), &incidents.cells);
    let rows = v
        .cells()
        .zip(rings)
        .filter_map(|((cell, f), d)| {
            policy.label_for(d).map(|label| LabeledRow {
                cell,
                features: *f,
                label,
                distance: Some(d),
            })
        })
        .collect();
    Ok(LabeledSet { rows })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelStats {
    pub positive: usize,
    pub zero: usize,
    /// Positive rows per Chebyshev ring.
    pub by_ring: BTreeMap<u32, usize>,
}

pub fn label_stats(set: &LabeledSet) -> LabelStats {
    let mut stats = LabelStats::default();
    for row in &set.rows {
        if row.label > 0.0 {
            stats.positive += 1;
            if let Some(d) = row.distance {
                *stats.by_ring.entry(d).or_insert(0) += 1;
            }
        } else {
            stats.zero += 1;
        }
    }
    stats
}

pub fn export_labels<W: Write>(set: &LabeledSet, mut sink: W) -> io::Result<()> {
    writeln!(sink, "{LABEL_CSV_HEADER}")?;
    for r in &set.rows {
        let f = r.features;
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            r.cell.0, r.cell.1, f.a_h, f.a_t, f.a_g, f.d_f, f.d_w, r.label
        )?;
    }
    sink.flush()
}

/// Reads a label CSV written by [`export_labels`]; ring distances are not
/// stored in the file and come back as `None`.
pub fn import_labels<R: BufRead>(source: R) -> Result<LabeledSet, LabelError> {
    let mut lines = source.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != LABEL_CSV_HEADER {
        return Err(LabelError::MalformedLabels {
            line: 1,
            reason: format!("expected header {LABEL_CSV_HEADER:?}"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| LabelError::MalformedLabels { line: lineno, reason };
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", fields.len())));
        }
        let i = fields[0].parse().map_err(|_| bad(format!("bad row {:?}", fields[0])))?;
        let j = fields[1].parse().map_err(|_| bad(format!("bad column {:?}", fields[1])))?;
        let mut vals = [0.0; 6];
        for (slot, raw) in vals.iter_mut().zip(&fields[2..]) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad value {raw:?}")))?;
        }
        let label = vals[5];
        if !(0.0..=1.0).contains(&label) {
            return Err(bad(format!("label {label} outside [0, 1]")));
        }
        rows.push(LabeledRow {
            cell: (i, j),
            features: FeatureVector::from_array([vals[0], vals[1], vals[2], vals[3], vals[4]]),
            label,
            distance: None,
        });
    }
    Ok(LabeledSet { rows })
}
