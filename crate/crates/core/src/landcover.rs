//! Classified land-cover rasters.
//!
//! A [`LandCoverGrid`] holds one integer class code per pixel, row 0 being the
//! northernmost row. Codes are resolved to the five [`SemanticClass`] factors
//! through a [`ClassMap`]; the default map follows the ESA WorldCover legend.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LandCoverError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-integer class code {token:?} on line {line}")]
    NonIntegerCode { line: usize, token: String },
    #[error("unmapped class code {0}")]
    UnmappedCode(i32),
    #[error("pixel ({row}, {col}) outside {n_rows}x{n_cols} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("unknown semantic class {0:?}")]
    UnknownClass(String),
    #[error("invalid geotransform: {0}")]
    InvalidGeoTransform(String),
}

/// The land-cover factors tracked by the feature grid, plus a catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum SemanticClass {
    BuiltUp = 0,
    Trees = 1,
    Grass = 2,
    Wetland = 3,
    Other = 4,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 5] = [
        SemanticClass::BuiltUp,
        SemanticClass::Trees,
        SemanticClass::Grass,
        SemanticClass::Wetland,
        SemanticClass::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::BuiltUp => "built_up",
            SemanticClass::Trees => "trees",
            SemanticClass::Grass => "grass",
            SemanticClass::Wetland => "wetland",
            SemanticClass::Other => "other",
        }
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SemanticClass {
    type Err = LandCoverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "built_up" | "builtup" => Ok(SemanticClass::BuiltUp),
            "trees" | "tree" => Ok(SemanticClass::Trees),
            "grass" | "grassland" => Ok(SemanticClass::Grass),
            "wetland" | "herbaceous_wetland" => Ok(SemanticClass::Wetland),
            "other" => Ok(SemanticClass::Other),
            _ => Err(LandCoverError::UnknownClass(s.to_string())),
        }
    }
}

/// Raster code to semantic class lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    table: BTreeMap<i32, SemanticClass>,
}

impl ClassMap {
    /// WorldCover legend: 10 tree cover, 20 shrubland, 30 grassland,
    /// 40 cropland, 50 built-up, 60 bare/sparse, 70 snow/ice, 80 water,
    /// 90 herbaceous wetland, 95 mangroves, 100 moss/lichen.
    pub fn worldcover() -> Self {
        let table = [
            (10, SemanticClass::Trees),
            (20, SemanticClass::Other),
            (30, SemanticClass::Grass),
            (40, SemanticClass::Other),
            (50, SemanticClass::BuiltUp),
            (60, SemanticClass::Other),
            (70, SemanticClass::Other),
            (80, SemanticClass::Other),
            (90, SemanticClass::Wetland),
            (95, SemanticClass::Other),
            (100, SemanticClass::Other),
        ]
        .into_iter()
        .collect();
        ClassMap { table }
    }

    pub fn empty() -> Self {
        ClassMap {
            table: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, code: i32, class: SemanticClass) -> &mut Self {
        self.table.insert(code, class);
        self
    }

    pub fn get(&self, code: i32) -> Option<SemanticClass> {
        self.table.get(&code).copied()
    }

    pub fn contains(&self, code: i32) -> bool {
        self.table.contains_key(&code)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, SemanticClass)> + '_ {
        self.table.iter().map(|(&c, &s)| (c, s))
    }

    /// First code mapped to `class`, used when synthesizing rasters.
    pub fn code_for(&self, class: SemanticClass) -> Option<i32> {
        self.table.iter().find(|(_, &s)| s == class).map(|(&c, _)| c)
    }
}

impl Default for ClassMap {
    fn default() -> Self {
        ClassMap::worldcover()
    }
}

/// North-up affine mapping between pixel indices and geographic degrees.
///
/// `origin_lat`/`origin_lon` locate the north-west corner of pixel `(0, 0)`;
/// rows grow southward and columns eastward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub pixel_size: f64,
}

impl GeoTransform {
    pub fn new(origin_lat: f64, origin_lon: f64, pixel_size: f64) -> Result<Self, LandCoverError> {
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(LandCoverError::InvalidGeoTransform(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if !origin_lat.is_finite() || !origin_lon.is_finite() {
            return Err(LandCoverError::InvalidGeoTransform("non-finite origin".into()));
        }
        Ok(GeoTransform {
            origin_lat,
            origin_lon,
            pixel_size,
        })
    }

    /// Builds the transform from an ESRI lower-left corner header.
    pub fn from_lower_left(
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        n_rows: usize,
    ) -> Result<Self, LandCoverError> {
        GeoTransform::new(yllcorner + n_rows as f64 * cellsize, xllcorner, cellsize)
    }

    pub fn lower_left(&self, n_rows: usize) -> (f64, f64) {
        (self.origin_lon, self.origin_lat - n_rows as f64 * self.pixel_size)
    }

    /// `(lat, lon)` of the center of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_lat - (row as f64 + 0.5) * self.pixel_size,
            self.origin_lon + (col as f64 + 0.5) * self.pixel_size,
        )
    }

    /// Fractional `(row, col)` position of a coordinate; the integer part is
    /// the containing pixel.
    pub fn pixel_position(&self, lat: f64, lon: f64) -> (f64, f64) {
        (
            (self.origin_lat - lat) / self.pixel_size,
            (lon - self.origin_lon) / self.pixel_size,
        )
    }

    /// Pixel containing `(lat, lon)`, or `None` outside the extent.
    pub fn pixel_of(&self, lat: f64, lon: f64, n_rows: usize, n_cols: usize) -> Option<(usize, usize)> {
        let (r, c) = self.pixel_position(lat, lon);
        if !(r >= 0.0 && c >= 0.0) {
            return None;
        }
        let (r, c) = (r.floor() as usize, c.floor() as usize);
        (r < n_rows && c < n_cols).then_some((r, c))
    }

    /// Transform of a grid whose cells each cover `g x g` pixels.
    pub fn coarsened(&self, g: usize) -> GeoTransform {
        GeoTransform {
            pixel_size: self.pixel_size * g as f64,
            ..*self
        }
    }
}

impl Default for GeoTransform {
    fn default() -> Self {
        GeoTransform {
            origin_lat: 0.0,
            origin_lon: 0.0,
            pixel_size: 1.0,
        }
    }
}

/// The pixel grid `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandCoverGrid {
    n_rows: usize,
    n_cols: usize,
    codes: Vec<i32>,
    resolved: Vec<SemanticClass>,
    geo: GeoTransform,
    classes: ClassMap,
    nodata: Option<i32>,
}

impl LandCoverGrid {
    /// Builds a grid from row-major codes. Codes missing from `classes`
    /// resolve to [`SemanticClass::Other`]; use [`validate`] to reject them.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        codes: Vec<i32>,
        geo: GeoTransform,
        classes: ClassMap,
    ) -> Result<Self, LandCoverError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(LandCoverError::DimensionMismatch(format!(
                "grid must be at least 1x1, got {n_rows}x{n_cols}"
            )));
        }
        if codes.len() != n_rows * n_cols {
            return Err(LandCoverError::DimensionMismatch(format!(
                "{} codes for a {n_rows}x{n_cols} grid",
                codes.len()
            )));
        }
        let resolved = codes
            .iter()
            .map(|&c| classes.get(c).unwrap_or(SemanticClass::Other))
            .collect();
        Ok(LandCoverGrid {
            n_rows,
            n_cols,
            codes,
            resolved,
            geo,
            classes,
            nodata: None,
        })
    }

    /// Marks `code` as the nodata value. Nodata pixels count as `Other` and
    /// are never reported as unmapped.
    pub fn with_nodata(mut self, code: Option<i32>) -> Self {
        self.nodata = code;
        if let Some(nd) = code {
            for (r, &c) in self.resolved.iter_mut().zip(&self.codes) {
                if c == nd {
                    *r = SemanticClass::Other;
                }
            }
        }
        self
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn codes(&self) -> &[i32] {
        &self.codes
    }

    /// Resolved classes, row-major.
    pub fn classes(&self) -> &[SemanticClass] {
        &self.resolved
    }

    pub fn class_map(&self) -> &ClassMap {
        &self.classes
    }

    pub fn geo(&self) -> &GeoTransform {
        &self.geo
    }

    pub fn nodata(&self) -> Option<i32> {
        self.nodata
    }

    pub fn code_at(&self, row: usize, col: usize) -> Result<i32, LandCoverError> {
        self.check_bounds(row, col)?;
        Ok(self.codes[row * self.n_cols + col])
    }

    pub fn class_of(&self, row: usize, col: usize) -> Result<SemanticClass, LandCoverError> {
        self.check_bounds(row, col)?;
        Ok(self.resolved[row * self.n_cols + col])
    }

    fn check_bounds(&self, row: usize, col: usize) -> Result<(), LandCoverError> {
        if row >= self.n_rows || col >= self.n_cols {
            return Err(LandCoverError::OutOfBounds {
                row,
                col,
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        Ok(())
    }
}

/// Per-class pixel counts plus any codes the class map does not cover.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub counts: [usize; 5],
    pub unmapped: BTreeMap<i32, usize>,
    pub nodata_pixels: usize,
}

impl ValidationReport {
    pub fn count(&self, class: SemanticClass) -> usize {
        self.counts[class.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_clean(&self) -> bool {
        self.unmapped.is_empty()
    }
}

/// Counts pixels per class. In strict mode the first unmapped code (lowest
/// value) is an error; otherwise unmapped codes are reported and counted as
/// `Other`.
pub fn validate(grid: &LandCoverGrid, strict: bool) -> Result<ValidationReport, LandCoverError> {
    let mut report = ValidationReport::default();
    for (&code, &class) in grid.codes.iter().zip(&grid.resolved) {
        report.counts[class.index()] += 1;
        if Some(code) == grid.nodata {
            report.nodata_pixels += 1;
        } else if !grid.classes.contains(code) {
            *report.unmapped.entry(code).or_insert(0) += 1;
        }
    }
    if strict {
        if let Some((&code, _)) = report.unmapped.iter().next() {
            return Err(LandCoverError::UnmappedCode(code));
        }
    }
    Ok(report)
}

const HEADER_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

/// Parses an ESRI ASCII grid of integer class codes.
pub fn parse_ascii_grid(text: &str, classes: ClassMap, strict: bool) -> Result<LandCoverGrid, LandCoverError> {
    let mut header: BTreeMap<&'static str, &str> = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();

    while let Some(&(_, line)) = lines.peek() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            lines.next();
            continue;
        }
        let starts_alpha = trimmed.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
        if !starts_alpha {
            break;
        }
        let mut parts = trimmed.split_whitespace();
        let key = parts.next().unwrap_or_default().to_ascii_lowercase();
        let value = parts
            .next()
            .ok_or_else(|| LandCoverError::MalformedHeader(format!("key {key:?} has no value")))?;
        if parts.next().is_some() {
            return Err(LandCoverError::MalformedHeader(format!("trailing tokens after {key:?}")));
        }
        let canonical = HEADER_KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| LandCoverError::MalformedHeader(format!("unknown key {key:?}")))?;
        if header.insert(canonical, value).is_some() {
            return Err(LandCoverError::MalformedHeader(format!("duplicate key {key:?}")));
        }
        lines.next();
    }

    fn field<T: FromStr>(header: &BTreeMap<&'static str, &str>, key: &str) -> Result<T, LandCoverError> {
        let raw = header
            .get(key)
            .ok_or_else(|| LandCoverError::MalformedHeader(format!("missing key {key:?}")))?;
        raw.parse()
            .map_err(|_| LandCoverError::MalformedHeader(format!("bad value {raw:?} for {key:?}")))
    }

    let n_cols: usize = field(&header, "ncols")?;
    let n_rows: usize = field(&header, "nrows")?;
    let xll: f64 = field(&header, "xllcorner")?;
    let yll: f64 = field(&header, "yllcorner")?;
    let cellsize: f64 = field(&header, "cellsize")?;
    let nodata: Option<i32> = if header.contains_key("nodata_value") {
        Some(field(&header, "nodata_value")?)
    } else {
        None
    };
    if n_rows == 0 || n_cols == 0 {
        return Err(LandCoverError::MalformedHeader(format!(
            "grid must be at least 1x1, got {n_rows}x{n_cols}"
        )));
    }
    let geo = GeoTransform::from_lower_left(xll, yll, cellsize, n_rows)
        .map_err(|e| LandCoverError::MalformedHeader(e.to_string()))?;

    let mut codes = Vec::with_capacity(n_rows * n_cols);
    let mut body_rows = 0usize;
    for (idx, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        body_rows += 1;
        if body_rows > n_rows {
            return Err(LandCoverError::DimensionMismatch(format!(
                "more than {n_rows} body rows (line {})",
                idx + 1
            )));
        }
        let before = codes.len();
        for token in trimmed.split_whitespace() {
            let code = token.parse::<i32>().map_err(|_| LandCoverError::NonIntegerCode {
                line: idx + 1,
                token: token.to_string(),
            })?;
            codes.push(code);
        }
        let got = codes.len() - before;
        if got != n_cols {
            return Err(LandCoverError::DimensionMismatch(format!(
                "line {} has {got} values, header says ncols={n_cols}",
                idx + 1
            )));
        }
    }
    if body_rows != n_rows {
        return Err(LandCoverError::DimensionMismatch(format!(
            "{body_rows} body rows, header says nrows={n_rows}"
        )));
    }

    let grid = LandCoverGrid::new(n_rows, n_cols, codes, geo, classes)?.with_nodata(nodata);
    validate(&grid, strict)?;
    Ok(grid)
}

/// Writes `grid` in the format read by [`parse_ascii_grid`].
pub fn write_ascii_grid<W: Write>(grid: &LandCoverGrid, mut sink: W) -> io::Result<()> {
    let (xll, yll) = grid.geo.lower_left(grid.n_rows);
    writeln!(sink, "ncols {}", grid.n_cols)?;
    writeln!(sink, "nrows {}", grid.n_rows)?;
    writeln!(sink, "xllcorner {xll:?}")?;
    writeln!(sink, "yllcorner {yll:?}")?;
    writeln!(sink, "cellsize {:?}", grid.geo.pixel_size)?;
    if let Some(nd) = grid.nodata {
        writeln!(sink, "NODATA_value {nd}")?;
    }
    let mut line = String::new();
    for row in grid.codes.chunks(grid.n_cols) {
        line.clear();
        for (k, code) in row.iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            line.push_str(&code.to_string());
        }
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    sink.flush()
}
