//! RBF kernel ridge regression.
//!
//! Dual coefficients solve `(K + lambda * n * I) alpha = y` with
//! `K_ab = exp(-gamma * |x_a - x_b|^2)`; predictions are
//! `b + sum_a alpha_a * k(x, x_a)`, where the intercept `b` is the mean
//! training target when `fit_intercept` is set and 0 otherwise.

use nalgebra::{DMatrix, DVector};

use super::{check_xy, ModelError, Row};
use crate::features::N_FEATURES;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelRidgeParams {
    /// Kernel bandwidth; `None` uses [`default_gamma`] on the training rows.
    pub gamma: Option<f64>,
    pub lambda: f64,
    pub max_rows: usize,
    /// Subsample down to `max_rows` instead of failing on larger inputs.
    pub subsample: bool,
    /// Fit on targets centered at their mean and add the mean back at
    /// prediction time.
    pub fit_intercept: bool,
    pub seed: u64,
}

impl Default for KernelRidgeParams {
    fn default() -> Self {
        KernelRidgeParams {
            gamma: None,
            lambda: 0.5,
            max_rows: 4000,
            subsample: true,
            fit_intercept: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidge {
    pub(crate) gamma: f64,
    pub(crate) lambda: f64,
    pub(crate) support: Vec<Row>,
    pub(crate) alpha: Vec<f64>,
    pub(crate) intercept: f64,
}

/// `1 / (5 * mean per-feature population variance)`, or 1 when every
/// feature is constant.
pub fn default_gamma(x: &[Row]) -> f64 {
    if x.is_empty() {
        return 1.0;
    }
    let n = x.len() as f64;
    let mut total = 0.0;
    for k in 0..N_FEATURES {
        let mean = x.iter().map(|r| r[k]).sum::<f64>() / n;
        total += x.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
    }
    let mean_var = total / N_FEATURES as f64;
    if mean_var > 0.0 {
        1.0 / (N_FEATURES as f64 * mean_var)
    } else {
        1.0
    }
}

fn sq_dist(a: &Row, b: &Row) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl KernelRidge {
    pub fn from_parts(gamma: f64, lambda: f64, support: Vec<Row>, alpha: Vec<f64>, intercept: f64) -> Result<Self, ModelError> {
        if support.is_empty() {
            return Err(ModelError::UnfittedModel);
        }
        if support.len() != alpha.len() || !(gamma > 0.0) || !(lambda > 0.0) || !intercept.is_finite() {
            return Err(ModelError::CorruptModel("inconsistent kernel ridge parameters".into()));
        }
        Ok(KernelRidge {
            gamma,
            lambda,
            support,
            alpha,
            intercept,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn support(&self) -> &[Row] {
        &self.support
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn kernel(&self, a: &Row, b: &Row) -> f64 {
        (-self.gamma * sq_dist(a, b)).exp()
    }

    pub fn predict(&self, x: &Row) -> f64 {
        self.intercept
            + self
                .support
                .iter()
                .zip(&self.alpha)
                .map(|(s, a)| a * self.kernel(x, s))
                .sum::<f64>()
    }
}

pub fn fit_kernel_ridge(x: &[Row], y: &[f64], params: &KernelRidgeParams) -> Result<KernelRidge, ModelError> {
    check_xy(x, y)?;
    if !(params.lambda > 0.0 && params.lambda.is_finite()) {
        return Err(ModelError::InvalidParams(format!("lambda must be positive, got {}", params.lambda)));
    }
    if let Some(g) = params.gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(ModelError::InvalidParams(format!("gamma must be positive, got {g}")));
        }
    }
    if params.max_rows == 0 {
        return Err(ModelError::InvalidParams("max_rows must be at least 1".into()));
    }

    let (support, targets): (Vec<Row>, Vec<f64>) = if x.len() > params.max_rows {
        if !params.subsample {
            return Err(ModelError::TooManyRows {
                rows: x.len(),
                cap: params.max_rows,
            });
        }
        log::warn!(
            "kernel ridge: subsampling {} of {} rows (seed {})",
            params.max_rows,
            x.len(),
            params.seed
        );
        let mut idx: Vec<usize> = (0..x.len()).collect();
        rng::shuffle(&mut rng::stream(params.seed, Stream::KernelSubsample, 0), &mut idx);
        idx.truncate(params.max_rows);
        idx.sort_unstable();
        idx.iter().map(|&k| (x[k], y[k])).unzip()
    } else {
        (x.to_vec(), y.to_vec())
    };

    let intercept = if params.fit_intercept {
        targets.iter().sum::<f64>() / targets.len() as f64
    } else {
        0.0
    };
    let targets: Vec<f64> = targets.iter().map(|t| t - intercept).collect();
    let gamma = params.gamma.unwrap_or_else(|| default_gamma(&support));
    let n = support.len();
    let ridge = params.lambda * n as f64;
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        gram[(j, j)] = 1.0 + ridge;
        for i in j + 1..n {
            let k = (-gamma * sq_dist(&support[i], &support[j])).exp();
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }
    let chol = gram.cholesky().ok_or(ModelError::SingularSystem)?;
    let alpha = chol.solve(&DVector::from_vec(targets));
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(ModelError::SingularSystem);
    }
    Ok(KernelRidge {
        gamma,
        lambda: params.lambda,
        support,
        alpha: alpha.iter().copied().collect(),
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(seed: u64, n: usize) -> (Vec<Row>, Vec<f64>) {
        let mut rng = rng::stream(seed, Stream::Synth, 0);
        let x: Vec<Row> = (0..n).map(|_| std::array::from_fn(|_| rng::unit(&mut rng) * 4.0 - 2.0)).collect();
        let y = x.iter().map(|r| (r[0] + 0.5 * r[1]).sin()).collect();
        (x, y)
    }

    #[test]
    fn single_row_closed_form() {
        let x = vec![[0.3, -1.0, 2.0, 0.0, 5.0]];
        let params = KernelRidgeParams { lambda: 0.5, fit_intercept: false, ..Default::default() };
        let m = fit_kernel_ridge(&x, &[0.9], &params).unwrap();
        assert!((m.predict(&x[0]) - 0.9 / 1.5).abs() < 1e-15);
        let centered = fit_kernel_ridge(&x, &[0.9], &KernelRidgeParams::default()).unwrap();
        assert_eq!(centered.predict(&x[0]), 0.9);
    }

    #[test]
    fn duplicated_rows_leave_predictions_unchanged() {
        let (x, y) = points(1, 30);
        let params = KernelRidgeParams { gamma: Some(0.7), lambda: 0.05, ..Default::default() };
        let m1 = fit_kernel_ridge(&x, &y, &params).unwrap();
        let x2: Vec<Row> = x.iter().chain(&x).copied().collect();
        let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
        let m2 = fit_kernel_ridge(&x2, &y2, &params).unwrap();
        for r in &x {
            assert!((m1.predict(r) - m2.predict(r)).abs() < 1e-8);
        }
    }

    #[test]
    fn near_interpolation() {
        let x: Vec<Row> = (0..8).map(|k| [k as f64 * 3.0, 0.0, 0.0, 0.0, 0.0]).collect();
        let y: Vec<f64> = (0..8).map(|k| (k as f64 * 0.37).cos()).collect();
        let params = KernelRidgeParams { gamma: Some(50.0), lambda: 1e-6, ..Default::default() };
        let m = fit_kernel_ridge(&x, &y, &params).unwrap();
        for (r, v) in x.iter().zip(&y) {
            assert!((m.predict(r) - v).abs() < 1e-3);
        }
    }

    #[test]
    fn residual_shrinks_with_lambda() {
        let (x, y) = points(2, 40);
        let mut last = f64::INFINITY;
        for lambda in [10.0, 1.0, 0.1, 0.01, 0.001] {
            let params = KernelRidgeParams { gamma: Some(0.5), lambda, ..Default::default() };
            let m = fit_kernel_ridge(&x, &y, &params).unwrap();
            let res: f64 = x.iter().zip(&y).map(|(r, v)| (m.predict(r) - v).powi(2)).sum();
            assert!(res < last, "lambda {lambda}: {res} >= {last}");
            last = res;
        }
    }

    #[test]
    fn row_cap() {
        let (x, y) = points(3, 50);
        let capped = KernelRidgeParams { max_rows: 20, subsample: false, ..Default::default() };
        assert_eq!(
            fit_kernel_ridge(&x, &y, &capped),
            Err(ModelError::TooManyRows { rows: 50, cap: 20 })
        );
        let sub = KernelRidgeParams { max_rows: 20, seed: 8, ..Default::default() };
        let a = fit_kernel_ridge(&x, &y, &sub).unwrap();
        assert_eq!(a.support().len(), 20);
        assert_eq!(a, fit_kernel_ridge(&x, &y, &sub).unwrap());
    }

    #[test]
    fn gamma_default_and_validation() {
        let x = vec![[0.0; 5], [2.0, 2.0, 2.0, 2.0, 2.0]];
        // Each feature has population variance 1.
        assert_eq!(default_gamma(&x), 0.2);
        assert_eq!(default_gamma(&[[1.0; 5]; 3]), 1.0);
        let bad = KernelRidgeParams { lambda: 0.0, ..Default::default() };
        assert!(matches!(fit_kernel_ridge(&x, &[0.0, 1.0], &bad), Err(ModelError::InvalidParams(_))));
    }
}
