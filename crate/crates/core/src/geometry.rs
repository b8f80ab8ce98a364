//! Grid kernels: windowed class counts, exact Euclidean distance transform,
//! and multi-source Chebyshev distances, each with a brute-force counterpart.

use std::collections::VecDeque;

use rayon::prelude::*;
use thiserror::Error;

use crate::landcover::{LandCoverGrid, SemanticClass};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("{n_rows}x{n_cols} grid is not divisible into {g}x{g} windows; crop it first")]
    IndivisibleDimensions { n_rows: usize, n_cols: usize, g: usize },
    #[error("window size must be at least 1")]
    ZeroWindow,
    #[error("cell ({row}, {col}) outside {n_rows}x{n_cols} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("{len} values for a {n_rows}x{n_cols} grid")]
    DimensionMismatch { len: usize, n_rows: usize, n_cols: usize },
}

fn check_dims(len: usize, n_rows: usize, n_cols: usize) -> Result<(), GeometryError> {
    if n_rows == 0 || n_cols == 0 || len != n_rows * n_cols {
        return Err(GeometryError::DimensionMismatch { len, n_rows, n_cols });
    }
    Ok(())
}

fn check_cell(row: usize, col: usize, n_rows: usize, n_cols: usize) -> Result<(), GeometryError> {
    if row >= n_rows || col >= n_cols {
        return Err(GeometryError::OutOfBounds {
            row,
            col,
            n_rows,
            n_cols,
        });
    }
    Ok(())
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BooleanGrid {
    n_rows: usize,
    n_cols: usize,
    bits: Vec<bool>,
}

impl BooleanGrid {
    pub fn new(n_rows: usize, n_cols: usize, bits: Vec<bool>) -> Result<Self, GeometryError> {
        check_dims(bits.len(), n_rows, n_cols)?;
        Ok(BooleanGrid { n_rows, n_cols, bits })
    }

    pub fn filled(n_rows: usize, n_cols: usize, value: bool) -> Result<Self, GeometryError> {
        BooleanGrid::new(n_rows, n_cols, vec![value; n_rows * n_cols])
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.n_cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.n_cols + col] = value;
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }
}

/// Row-major nonnegative distances in cell units.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceGrid {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
    /// Set when the source set was empty and every value is the sentinel.
    pub no_source: bool,
}

impl DistanceGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }
}

/// Distance reported for every cell when there is nothing to measure to:
/// the grid diagonal, which exceeds any in-grid distance.
pub fn sentinel_distance(n_rows: usize, n_cols: usize) -> f64 {
    ((n_rows * n_rows + n_cols * n_cols) as f64).sqrt()
}

/// Per-window pixel counts of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountGrid {
    pub n_rows: usize,
    pub n_cols: usize,
    pub g: usize,
    pub values: Vec<u32>,
}

/// Counts of every [`SemanticClass`] per `g x g` window, indexed by
/// [`SemanticClass::index`]. Returns `(rows, cols, counts)`.
pub fn window_class_counts(grid: &LandCoverGrid, g: usize) -> Result<(usize, usize, Vec<[u32; 5]>), GeometryError> {
    if g == 0 {
        return Err(GeometryError::ZeroWindow);
    }
    let (n_rows, n_cols) = (grid.n_rows(), grid.n_cols());
    if n_rows % g != 0 || n_cols % g != 0 {
        return Err(GeometryError::IndivisibleDimensions { n_rows, n_cols, g });
    }
    let (out_rows, out_cols) = (n_rows / g, n_cols / g);
    let classes = grid.classes();
    let mut counts = vec![[0u32; 5]; out_rows * out_cols];
    counts
        .par_chunks_mut(out_cols)
        .enumerate()
        .for_each(|(bi, block_row)| {
            for r in bi * g..(bi + 1) * g {
                let pixels = &classes[r * n_cols..(r + 1) * n_cols];
                for (bj, window) in pixels.chunks_exact(g).enumerate() {
                    let cell = &mut block_row[bj];
                    for &c in window {
                        cell[c.index()] += 1;
                    }
                }
            }
        });
    Ok((out_rows, out_cols, counts))
}

/// Number of `cls` pixels in each `g x g` window. No padding: both
/// dimensions must be multiples of `g`.
pub fn window_counts(grid: &LandCoverGrid, g: usize, cls: SemanticClass) -> Result<CountGrid, GeometryError> {
    let (n_rows, n_cols, all) = window_class_counts(grid, g)?;
    Ok(CountGrid {
        n_rows,
        n_cols,
        g,
        values: all.iter().map(|c| c[cls.index()]).collect(),
    })
}

/// Exact squared Euclidean distance transform, or `None` for an all-false
/// mask.
///
/// Two separable passes (Meijster, Roerdink and Hesselink): a column sweep
/// computing vertical distances to the nearest true cell, then a per-row lower
/// envelope of parabolas `(x - i)^2 + g(i)^2`. Separator abscissae use floor
/// division on integers, so every value is exact.
pub fn squared_distance_transform(mask: &BooleanGrid) -> Option<Vec<u64>> {
    if !mask.any() {
        return None;
    }
    let (n_rows, n_cols) = (mask.n_rows, mask.n_cols);
    let inf = (n_rows + n_cols) as i64;

    // Column pass, swept row by row so memory access stays sequential.
    let mut vertical = vec![inf; n_rows * n_cols];
    for col in 0..n_cols {
        if mask.bits[col] {
            vertical[col] = 0;
        }
    }
    for row in 1..n_rows {
        let (prev, cur) = vertical.split_at_mut(row * n_cols);
        let prev = &prev[(row - 1) * n_cols..];
        let bits = &mask.bits[row * n_cols..(row + 1) * n_cols];
        for col in 0..n_cols {
            cur[col] = if bits[col] { 0 } else { (prev[col] + 1).min(inf) };
        }
    }
    for row in (0..n_rows.saturating_sub(1)).rev() {
        let (cur, next) = vertical.split_at_mut((row + 1) * n_cols);
        let cur = &mut cur[row * n_cols..];
        for col in 0..n_cols {
            if next[col] < cur[col] {
                cur[col] = next[col] + 1;
            }
        }
    }

    let mut out = vec![0u64; n_rows * n_cols];
    out.par_chunks_mut(n_cols)
        .zip(vertical.par_chunks(n_cols))
        .for_each_init(
            || (vec![0usize; n_cols], vec![0i64; n_cols]),
            |(s, t), (dst, g)| lower_envelope_row(g, dst, s, t),
        );
    Some(out)
}

fn lower_envelope_row(g: &[i64], dst: &mut [u64], s: &mut [usize], t: &mut [i64]) {
    let m = g.len();
    let f = |x: i64, i: usize| (x - i as i64).pow(2) + g[i] * g[i];
    let sep = |i: usize, u: usize| {
        let (i64_i, i64_u) = (i as i64, u as i64);
        let num = i64_u * i64_u - i64_i * i64_i + g[u] * g[u] - g[i] * g[i];
        num.div_euclid(2 * (i64_u - i64_i))
    };

    let mut q: isize = 0;
    s[0] = 0;
    t[0] = 0;
    for u in 1..m {
        while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
            q -= 1;
        }
        if q < 0 {
            q = 0;
            s[0] = u;
        } else {
            let w = 1 + sep(s[q as usize], u);
            if w < m as i64 {
                q += 1;
                s[q as usize] = u;
                t[q as usize] = w;
            }
        }
    }
    for u in (0..m).rev() {
        dst[u] = f(u as i64, s[q as usize]) as u64;
        if u as i64 == t[q as usize] {
            q -= 1;
        }
    }
}

/// Euclidean distance from every cell center to the nearest true cell
/// center. An all-false mask yields the [`sentinel_distance`] everywhere
/// with `no_source` set.
pub fn exact_distance_transform(mask: &BooleanGrid) -> DistanceGrid {
    let (n_rows, n_cols) = (mask.n_rows, mask.n_cols);
    match squared_distance_transform(mask) {
        Some(sq) => DistanceGrid {
            n_rows,
            n_cols,
            values: sq.into_iter().map(|d| (d as f64).sqrt()).collect(),
            no_source: false,
        },
        None => {
            log::warn!("distance transform over an empty {n_rows}x{n_cols} mask; using sentinel");
            DistanceGrid {
                n_rows,
                n_cols,
                values: vec![sentinel_distance(n_rows, n_cols); n_rows * n_cols],
                no_source: true,
            }
        }
    }
}

/// Exhaustive minimum squared distance from `(row, col)` to a true cell.
pub fn brute_force_squared(mask: &BooleanGrid, row: usize, col: usize) -> Result<Option<u64>, GeometryError> {
    check_cell(row, col, mask.n_rows, mask.n_cols)?;
    let mut best: Option<u64> = None;
    for r in 0..mask.n_rows {
        for c in 0..mask.n_cols {
            if mask.get(r, c) {
                let d = (r.abs_diff(row).pow(2) + c.abs_diff(col).pow(2)) as u64;
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
    }
    Ok(best)
}

/// Exhaustive search for the nearest true cell; sentinel when none exists.
pub fn brute_force_distance(mask: &BooleanGrid, row: usize, col: usize) -> Result<f64, GeometryError> {
    Ok(brute_force_squared(mask, row, col)?
        .map(|d| (d as f64).sqrt())
        .unwrap_or_else(|| sentinel_distance(mask.n_rows, mask.n_cols)))
}

/// Chebyshev distance `max(|dr|, |dc|)` to the nearest point, by
/// multi-source breadth-first expansion over the 8-neighborhood.
pub fn chebyshev_distance_to_points(
    dims: (usize, usize),
    points: &[(usize, usize)],
) -> Result<DistanceGrid, GeometryError> {
    let (n_rows, n_cols) = dims;
    if n_rows == 0 || n_cols == 0 {
        return Err(GeometryError::DimensionMismatch { len: 0, n_rows, n_cols });
    }
    for &(r, c) in points {
        check_cell(r, c, n_rows, n_cols)?;
    }
    if points.is_empty() {
        log::warn!("no points for Chebyshev distances; using sentinel");
        return Ok(DistanceGrid {
            n_rows,
            n_cols,
            values: vec![sentinel_distance(n_rows, n_cols); n_rows * n_cols],
            no_source: true,
        });
    }
    let rings = chebyshev_rings(dims, points);
    Ok(DistanceGrid {
        n_rows,
        n_cols,
        values: rings.into_iter().map(f64::from).collect(),
        no_source: false,
    })
}

/// Integer Chebyshev distances; callers guarantee `points` is nonempty and
/// in bounds.
pub(crate) fn chebyshev_rings(dims: (usize, usize), points: &[(usize, usize)]) -> Vec<u32> {
    let (n_rows, n_cols) = dims;
    let mut dist = vec![u32::MAX; n_rows * n_cols];
    let mut queue = VecDeque::with_capacity(points.len());
    for &(r, c) in points {
        let k = r * n_cols + c;
        if dist[k] != 0 {
            dist[k] = 0;
            queue.push_back((r, c));
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        let next = dist[r * n_cols + c] + 1;
        for nr in r.saturating_sub(1)..=(r + 1).min(n_rows - 1) {
            for nc in c.saturating_sub(1)..=(c + 1).min(n_cols - 1) {
                let k = nr * n_cols + nc;
                if dist[k] == u32::MAX {
                    dist[k] = next;
                    queue.push_back((nr, nc));
                }
            }
        }
    }
    dist
}
