//! Brute-force reference implementations shared by the integration tests.
//! None of these call the library code they are used to check.

#![allow(dead_code)]

use poachmap::landcover::{LandCoverGrid, SemanticClass};
use poachmap::rng::{self, Stream};

/// Squared Euclidean distance from every cell to the nearest set cell, by
/// scanning all pairs. `None` everywhere when the mask is empty.
pub fn brute_squared(mask: &[bool], n_rows: usize, n_cols: usize) -> Option<Vec<u64>> {
    let sources: Vec<(i64, i64)> = (0..n_rows * n_cols)
        .filter(|&k| mask[k])
        .map(|k| ((k / n_cols) as i64, (k % n_cols) as i64))
        .collect();
    if sources.is_empty() {
        return None;
    }
    Some(
        (0..n_rows * n_cols)
            .map(|k| {
                let (r, c) = ((k / n_cols) as i64, (k % n_cols) as i64);
                sources
                    .iter()
                    .map(|&(a, b)| ((r - a) * (r - a) + (c - b) * (c - b)) as u64)
                    .min()
                    .unwrap()
            })
            .collect(),
    )
}

/// Distance field as the feature builder defines it: Euclidean to the
/// nearest set cell, or the grid diagonal when there is none.
pub fn brute_distances(mask: &[bool], n_rows: usize, n_cols: usize) -> Vec<f64> {
    match brute_squared(mask, n_rows, n_cols) {
        Some(sq) => sq.iter().map(|&s| (s as f64).sqrt()).collect(),
        None => vec![((n_rows * n_rows + n_cols * n_cols) as f64).sqrt(); n_rows * n_cols],
    }
}

/// Feature vectors `[a_h, a_t, a_g, d_f, d_w]` by recounting every window
/// pixel by pixel.
pub fn brute_features(grid: &LandCoverGrid, g: usize) -> Vec<[f64; 5]> {
    let (rows, cols) = (grid.n_rows() / g, grid.n_cols() / g);
    let mut counts = vec![[0u32; 5]; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            for r in i * g..(i + 1) * g {
                for c in j * g..(j + 1) * g {
                    let class = grid.class_of(r, c).unwrap();
                    counts[i * cols + j][class as usize] += 1;
                }
            }
        }
    }
    let area = (g * g) as f64;
    let forest: Vec<bool> = counts.iter().map(|c| c[SemanticClass::Trees as usize] > 0).collect();
    let wetland: Vec<bool> = counts.iter().map(|c| c[SemanticClass::Wetland as usize] > 0).collect();
    let d_f = brute_distances(&forest, rows, cols);
    let d_w = brute_distances(&wetland, rows, cols);
    counts
        .iter()
        .enumerate()
        .map(|(k, c)| {
            [
                c[SemanticClass::BuiltUp as usize] as f64 / area,
                c[SemanticClass::Trees as usize] as f64 / area,
                c[SemanticClass::Grass as usize] as f64 / area,
                d_f[k],
                d_w[k],
            ]
        })
        .collect()
}

/// Chebyshev distance from every cell to the nearest point.
pub fn brute_chebyshev(points: &[(usize, usize)], n_rows: usize, n_cols: usize) -> Vec<u32> {
    (0..n_rows * n_cols)
        .map(|k| {
            let (r, c) = ((k / n_cols) as i64, (k % n_cols) as i64);
            points
                .iter()
                .map(|&(a, b)| (r - a as i64).abs().max((c - b as i64).abs()) as u32)
                .min()
                .unwrap()
        })
        .collect()
}

/// Label rule written out case by case: `1 - 0.1 d` inside radius 9, 0
/// beyond `zero_radius`, excluded in between.
pub fn brute_label(d: u32, zero_radius: u32) -> Option<f64> {
    if d <= 9 {
        Some(1.0 - 0.1 * d as f64)
    } else if d > zero_radius {
        Some(0.0)
    } else {
        None
    }
}

/// Random mask of the given density.
pub fn random_mask(seed: u64, n_rows: usize, n_cols: usize, density: f64) -> Vec<bool> {
    let mut r = rng::stream(seed, Stream::Synth, 99);
    (0..n_rows * n_cols).map(|_| rng::unit(&mut r) < density).collect()
}

/// Uniform random rows in `[0, scale)^5`.
pub fn random_rows(seed: u64, n: usize, scale: f64) -> Vec<[f64; 5]> {
    let mut r = rng::stream(seed, Stream::Synth, 98);
    (0..n)
        .map(|_| std::array::from_fn(|_| rng::unit(&mut r) * scale))
        .collect()
}

/// Central finite difference of `f` at `p` in coordinate `k`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, p: &[f64], k: usize, h: f64) -> f64 {
    let mut a = p.to_vec();
    let mut b = p.to_vec();
    a[k] += h;
    b[k] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
