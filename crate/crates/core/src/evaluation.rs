//! R² scoring, validation-set grid search and permutation importance.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::features::{FEATURE_NAMES, N_FEATURES};
use crate::models::{
    fit_forest, fit_kernel_ridge, fit_mlp, ForestParams, KernelRidgeParams, MlpParams, ModelError, ModelFamily,
    Predictor, Regressor, Row,
};
use crate::rng::{self, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions but {targets} targets")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("R² needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("targets have zero variance; R² is undefined")]
    ZeroVarianceTargets,
    #[error("permutation importance needs at least 10 rows, got {0}")]
    TooFewRows(usize),
    #[error("n_repeats must be at least 1")]
    NoRepeats,
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("fit failed at {point}: {source}")]
    Fit { point: String, source: ModelError },
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(predictions: &[f64], targets: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != targets.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    if targets.len() < 2 {
        return Err(EvalError::TooFewValues(targets.len()));
    }
    if targets.iter().all(|&t| t == targets[0]) {
        return Err(EvalError::ZeroVarianceTargets);
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// One lattice point, i.e. a full parameter set for one model family.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamPoint {
    RandomForest(ForestParams),
    KernelRidge(KernelRidgeParams),
    Mlp(MlpParams),
}

impl ParamPoint {
    pub fn family(&self) -> ModelFamily {
        match self {
            ParamPoint::RandomForest(_) => ModelFamily::RandomForest,
            ParamPoint::KernelRidge(_) => ModelFamily::KernelRidge,
            ParamPoint::Mlp(_) => ModelFamily::Mlp,
        }
    }

    /// Ordering key for breaking exact score ties; smaller is preferred.
    fn size_key(&self) -> (f64, f64) {
        match self {
            ParamPoint::RandomForest(p) => (p.n_trees as f64, p.tree.max_depth as f64),
            ParamPoint::KernelRidge(p) => ((p.lambda - KernelRidgeParams::default().lambda).abs(), 0.0),
            ParamPoint::Mlp(p) => (p.max_iter as f64, 0.0),
        }
    }

    /// Fit on `(x, y)`; the MLP uses `val` for early stopping.
    pub fn fit(&self, x: &[Row], y: &[f64], val_x: &[Row], val_y: &[f64]) -> Result<Regressor, ModelError> {
        Ok(match self {
            ParamPoint::RandomForest(p) => Regressor::RandomForest(fit_forest(x, y, p)?),
            ParamPoint::KernelRidge(p) => Regressor::KernelRidge(fit_kernel_ridge(x, y, p)?),
            ParamPoint::Mlp(p) => Regressor::Mlp(fit_mlp(x, y, val_x, val_y, p)?.model),
        })
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamPoint::RandomForest(p) => write!(
                f,
                "n_trees={};max_depth={};min_samples_leaf={};features_per_split={}",
                p.n_trees, p.tree.max_depth, p.tree.min_samples_leaf, p.tree.features_per_split
            ),
            ParamPoint::KernelRidge(p) => match p.gamma {
                Some(g) => write!(f, "lambda={};gamma={g}", p.lambda),
                None => write!(f, "lambda={};gamma=auto", p.lambda),
            },
            ParamPoint::Mlp(p) => {
                let hidden: Vec<String> = p.hidden.iter().map(|h| h.to_string()).collect();
                write!(
                    f,
                    "hidden=[{}];learning_rate={};max_iter={};patience={}",
                    hidden.join(" "),
                    p.learning_rate,
                    p.max_iter,
                    p.patience
                )
            }
        }
    }
}

/// A parameter lattice: the Cartesian product of the listed values over a
/// base parameter set.
#[derive(Debug, Clone, PartialEq)]
pub enum Lattice {
    RandomForest {
        base: ForestParams,
        max_depth: Vec<usize>,
        n_trees: Vec<usize>,
    },
    KernelRidge {
        base: KernelRidgeParams,
        lambda: Vec<f64>,
    },
    Mlp {
        base: MlpParams,
        learning_rate: Vec<f64>,
        max_iter: Vec<usize>,
    },
}

impl Lattice {
    pub fn default_for(family: ModelFamily, seed: u64) -> Lattice {
        match family {
            ModelFamily::RandomForest => Lattice::RandomForest {
                base: ForestParams { seed, ..Default::default() },
                max_depth: vec![2, 4, 6, 8, 10],
                n_trees: vec![100, 300, 500],
            },
            ModelFamily::KernelRidge => Lattice::KernelRidge {
                base: KernelRidgeParams { seed, ..Default::default() },
                lambda: vec![0.001, 0.01, 0.1, 0.5],
            },
            ModelFamily::Mlp => Lattice::Mlp {
                base: MlpParams { seed, ..Default::default() },
                learning_rate: vec![0.01, 0.05],
                max_iter: vec![1000, 5000],
            },
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            Lattice::RandomForest { .. } => ModelFamily::RandomForest,
            Lattice::KernelRidge { .. } => ModelFamily::KernelRidge,
            Lattice::Mlp { .. } => ModelFamily::Mlp,
        }
    }

    /// Points in row-major order over the listed axes.
    pub fn points(&self) -> Vec<ParamPoint> {
        match self {
            Lattice::RandomForest { base, max_depth, n_trees } => max_depth
                .iter()
                .flat_map(|&d| {
                    n_trees.iter().map(move |&t| {
                        let mut p = *base;
                        p.tree.max_depth = d;
                        p.n_trees = t;
                        ParamPoint::RandomForest(p)
                    })
                })
                .collect(),
            Lattice::KernelRidge { base, lambda } => lambda
                .iter()
                .map(|&l| ParamPoint::KernelRidge(KernelRidgeParams { lambda: l, ..*base }))
                .collect(),
            Lattice::Mlp { base, learning_rate, max_iter } => learning_rate
                .iter()
                .flat_map(|&lr| {
                    max_iter.iter().map(move |&it| {
                        ParamPoint::Mlp(MlpParams {
                            learning_rate: lr,
                            max_iter: it,
                            ..base.clone()
                        })
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeScore {
    pub point: ParamPoint,
    pub train_r2: f64,
    pub val_r2: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: usize,
    pub scores: Vec<LatticeScore>,
    pub model: Regressor,
}

impl GridResult {
    pub fn best_point(&self) -> &ParamPoint {
        &self.scores[self.best].point
    }
}

/// Fits every lattice point on the training split and keeps the one with
/// the highest validation R². Exact ties go to the smaller model, then to
/// the earlier lattice point.
pub fn grid_search(
    lattice: &Lattice,
    train_x: &[Row],
    train_y: &[f64],
    val_x: &[Row],
    val_y: &[f64],
) -> Result<GridResult, EvalError> {
    let points = lattice.points();
    if points.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut scores = Vec::with_capacity(points.len());
    let mut best: Option<(usize, Regressor)> = None;
    for (k, point) in points.into_iter().enumerate() {
        let model = point.fit(train_x, train_y, val_x, val_y).map_err(|source| EvalError::Fit {
            point: point.to_string(),
            source,
        })?;
        let train_r2 = r2(&model.predict_rows(train_x), train_y)?;
        let val_r2 = r2(&model.predict_rows(val_x), val_y)?;
        log::info!("grid {point}: train R² {train_r2:.4}, validation R² {val_r2:.4}");
        let better = match &best {
            None => true,
            Some((b, _)) => {
                let incumbent: &LatticeScore = &scores[*b];
                val_r2 > incumbent.val_r2
                    || (val_r2 == incumbent.val_r2 && point.size_key() < incumbent.point.size_key())
            }
        };
        scores.push(LatticeScore { point, train_r2, val_r2 });
        if better {
            best = Some((k, model));
        }
    }
    let (best, model) = best.expect("lattice is nonempty");
    Ok(GridResult { best, scores, model })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub family: ModelFamily,
    pub params: String,
    pub train_r2: f64,
    pub val_r2: f64,
    pub test_r2: f64,
    pub lattice: Vec<LatticeScore>,
}

impl ScoreReport {
    /// `kind,family,params,train_r2,val_r2,test_r2`; the chosen model comes
    /// first, followed by one `lattice` row per grid point.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> io::Result<()> {
        writeln!(sink, "kind,family,params,train_r2,val_r2,test_r2")?;
        writeln!(
            sink,
            "chosen,{},{},{:?},{:?},{:?}",
            self.family, self.params, self.train_r2, self.val_r2, self.test_r2
        )?;
        for s in &self.lattice {
            writeln!(
                sink,
                "lattice,{},{},{:?},{:?},",
                s.point.family(),
                s.point,
                s.train_r2,
                s.val_r2
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ({})", self.family, self.params)?;
        writeln!(f, "  train R²      {:.4}", self.train_r2)?;
        writeln!(f, "  validation R² {:.4}", self.val_r2)?;
        write!(f, "  test R²       {:.4}", self.test_r2)?;
        for s in &self.lattice {
            write!(f, "\n  grid {}: val R² {:.4}", s.point, s.val_r2)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub baseline: f64,
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
    pub n_repeats: usize,
    pub seed: u64,
}

impl ImportanceReport {
    pub fn argmax(&self) -> usize {
        (0..N_FEATURES).fold(0, |b, k| if self.mean[k] > self.mean[b] { k } else { b })
    }

    pub fn write_csv<W: Write>(&self, mut sink: W) -> io::Result<()> {
        writeln!(sink, "feature,importance_mean,importance_std")?;
        for k in 0..N_FEATURES {
            writeln!(sink, "{},{:?},{:?}", FEATURE_NAMES[k], self.mean[k], self.std[k])?;
        }
        Ok(())
    }
}

impl fmt::Display for ImportanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "baseline R² {:.4} ({} repeats, seed {})", self.baseline, self.n_repeats, self.seed)?;
        for k in 0..N_FEATURES {
            write!(f, "\n  {:<4} {:>8.4} ± {:.4}", FEATURE_NAMES[k], self.mean[k], self.std[k])?;
        }
        Ok(())
    }
}

/// Drop in R² after shuffling one feature column. Repeat `r` of feature `k`
/// shuffles with `rng::stream(seed, Stream::Importance, k * n_repeats + r)`;
/// the reported spread is the population standard deviation over repeats.
pub fn permutation_importance<P: Predictor + ?Sized>(
    model: &P,
    rows: &[Row],
    targets: &[f64],
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceReport, EvalError> {
    if rows.len() != targets.len() {
        return Err(EvalError::LengthMismatch {
            predictions: rows.len(),
            targets: targets.len(),
        });
    }
    if rows.len() < 10 {
        return Err(EvalError::TooFewRows(rows.len()));
    }
    if n_repeats == 0 {
        return Err(EvalError::NoRepeats);
    }
    let baseline = r2(&model.predict_rows(rows), targets)?;
    let drops: Vec<f64> = (0..N_FEATURES * n_repeats)
        .into_par_iter()
        .map(|job| {
            let k = job / n_repeats;
            let mut column: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            rng::shuffle(&mut rng::stream(seed, Stream::Importance, job as u64), &mut column);
            let permuted: Vec<Row> = rows
                .iter()
                .zip(&column)
                .map(|(r, &v)| {
                    let mut r = *r;
                    r[k] = v;
                    r
                })
                .collect();
            r2(&model.predict_rows(&permuted), targets).map(|s| baseline - s)
        })
        .collect::<Result<_, _>>()?;
    let mut mean = [0.0; N_FEATURES];
    let mut std = [0.0; N_FEATURES];
    for k in 0..N_FEATURES {
        let d = &drops[k * n_repeats..(k + 1) * n_repeats];
        mean[k] = d.iter().sum::<f64>() / n_repeats as f64;
        std[k] = (d.iter().map(|v| (v - mean[k]).powi(2)).sum::<f64>() / n_repeats as f64).sqrt();
    }
    Ok(ImportanceReport {
        baseline,
        mean,
        std,
        n_repeats,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DecisionTree, Node, RandomForest};

    fn data(seed: u64, n: usize) -> (Vec<Row>, Vec<f64>) {
        let mut r = rng::stream(seed, Stream::Synth, 0);
        let x: Vec<Row> = (0..n).map(|_| std::array::from_fn(|_| rng::unit(&mut r))).collect();
        let y = x.iter().map(|v| 0.7 * v[0] + 0.2 * v[4] * v[4] + 0.05 * rng::unit(&mut r)).collect();
        (x, y)
    }

    #[test]
    fn r2_reference_values() {
        let y = [0.1, 0.5, 0.2, 0.9];
        assert_eq!(r2(&y, &y), Ok(1.0));
        let m = y.iter().sum::<f64>() / 4.0;
        assert!(r2(&[m; 4], &y).unwrap().abs() < 1e-12);
        assert_eq!(r2(&[1.0, 0.0], &[0.0, 1.0]), Ok(-3.0));
        assert_eq!(r2(&[1.0, 2.0], &[3.0, 3.0]), Err(EvalError::ZeroVarianceTargets));
        assert_eq!(r2(&[1.0], &[3.0]), Err(EvalError::TooFewValues(1)));
        assert!(matches!(r2(&[1.0], &[3.0, 4.0]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn r2_brute_force() {
        let (x, y) = data(1, 50);
        let p: Vec<f64> = x.iter().map(|v| v[0]).collect();
        let mean = y.iter().sum::<f64>() / 50.0;
        let mut res = 0.0;
        let mut tot = 0.0;
        for k in 0..50 {
            res += (y[k] - p[k]).powi(2);
            tot += (y[k] - mean).powi(2);
        }
        assert!((r2(&p, &y).unwrap() - (1.0 - res / tot)).abs() < 1e-14);
        assert!(r2(&p, &y).unwrap() <= 1.0);
    }

    #[test]
    fn default_forest_lattice_has_fifteen_points() {
        let l = Lattice::default_for(ModelFamily::RandomForest, 0);
        assert_eq!(l.points().len(), 15);
        assert!(l.points().iter().all(|p| p.family() == ModelFamily::RandomForest));
    }

    #[test]
    fn grid_search_picks_max_validation() {
        let (x, y) = data(2, 300);
        let (vx, vy) = data(3, 100);
        let lattice = Lattice::RandomForest {
            base: ForestParams { seed: 1, ..Default::default() },
            max_depth: vec![1, 3, 6],
            n_trees: vec![5, 20],
        };
        let res = grid_search(&lattice, &x, &y, &vx, &vy).unwrap();
        assert_eq!(res.scores.len(), 6);
        let best = res.scores[res.best].val_r2;
        assert!(res.scores.iter().all(|s| s.val_r2 <= best));
        assert_eq!(r2(&res.model.predict_rows(&vx), &vy).unwrap(), best);
    }

    #[test]
    fn grid_search_singleton_and_ties() {
        let (x, y) = data(4, 80);
        let single = Lattice::RandomForest {
            base: ForestParams { seed: 2, ..Default::default() },
            max_depth: vec![3],
            n_trees: vec![7],
        };
        let res = grid_search(&single, &x, &y, &x, &y).unwrap();
        assert_eq!(res.best, 0);
        assert_eq!(res.best_point(), &single.points()[0]);

        // A step target is fit exactly at depth 1, so deeper trees are
        // identical and the shallower point wins the tie.
        let step: Vec<f64> = x.iter().map(|r| if r[0] > 0.5 { 0.8 } else { 0.2 }).collect();
        let tied = Lattice::RandomForest {
            base: ForestParams { seed: 2, ..Default::default() },
            max_depth: vec![8, 2],
            n_trees: vec![3],
        };
        let res = grid_search(&tied, &x, &step, &x, &step).unwrap();
        assert_eq!(res.scores[0].val_r2, res.scores[1].val_r2);
        assert_eq!(res.best, 1);

        let empty = Lattice::KernelRidge {
            base: KernelRidgeParams::default(),
            lambda: vec![],
        };
        assert!(matches!(grid_search(&empty, &x, &y, &x, &y), Err(EvalError::EmptyGrid)));
    }

    #[test]
    fn fit_errors_name_the_point() {
        let (x, y) = data(5, 30);
        let bad = Lattice::KernelRidge {
            base: KernelRidgeParams::default(),
            lambda: vec![0.1, -1.0],
        };
        match grid_search(&bad, &x, &y, &x, &y) {
            Err(EvalError::Fit { point, .. }) => assert!(point.contains("lambda=-1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_model_has_zero_importance() {
        let (x, y) = data(6, 40);
        let constant = |_: &Row| 0.42;
        let rep = permutation_importance(&constant, &x, &y, 3, 9).unwrap();
        assert_eq!(rep.mean, [0.0; 5]);
        assert_eq!(rep.std, [0.0; 5]);
    }

    #[test]
    fn unread_feature_has_exactly_zero_importance() {
        let (x, y) = data(7, 200);
        let forest = fit_forest(&x, &y, &ForestParams { n_trees: 10, seed: 3, ..Default::default() }).unwrap();
        let read: Vec<bool> = (0..5)
            .map(|k| forest.trees().iter().any(|t| t.split_features()[k]))
            .collect();
        let rep = permutation_importance(&Regressor::RandomForest(forest), &x, &y, 4, 1).unwrap();
        for k in 0..5 {
            if !read[k] {
                assert_eq!(rep.mean[k], 0.0);
            }
        }
        assert_eq!(rep.argmax(), 0);

        let stump = DecisionTree::from_nodes(vec![
            Node::Split { feature: 2, threshold: 0.5, left: 1, right: 2 },
            Node::Leaf { value: 0.1 },
            Node::Leaf { value: 0.9 },
        ])
        .unwrap();
        let m = Regressor::RandomForest(RandomForest::from_trees(vec![stump]).unwrap());
        let rep = permutation_importance(&m, &x, &y, 2, 1).unwrap();
        assert_eq!([rep.mean[0], rep.mean[1], rep.mean[3], rep.mean[4]], [0.0; 4]);
    }

    #[test]
    fn importance_is_deterministic() {
        let (x, y) = data(8, 60);
        let model = |r: &Row| r[0] * 0.7;
        let a = permutation_importance(&model, &x, &y, 1, 5).unwrap();
        assert_eq!(a, permutation_importance(&model, &x, &y, 1, 5).unwrap());
        assert_ne!(a, permutation_importance(&model, &x, &y, 1, 6).unwrap());
        assert_eq!(
            permutation_importance(&model, &x[..9], &y[..9], 1, 5),
            Err(EvalError::TooFewRows(9))
        );
    }

    #[test]
    fn csv_shapes() {
        let (x, y) = data(9, 30);
        let rep = permutation_importance(&|r: &Row| r[0], &x, &y, 2, 0).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("feature,importance_mean,importance_std\na_h,"));
    }
}
