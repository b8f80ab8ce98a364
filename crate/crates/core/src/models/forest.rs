use rayon::prelude::*;

use super::tree::{grow, presort, DecisionTree, TreeParams};
use super::{check_xy, ModelError, Row};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Draw an `n`-row bootstrap per tree. Disabling it is for debugging:
    /// every tree then sees the full data.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            tree: TreeParams::default(),
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub(crate) trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn from_trees(trees: Vec<DecisionTree>) -> Result<Self, ModelError> {
        if trees.is_empty() {
            return Err(ModelError::UnfittedModel);
        }
        Ok(RandomForest { trees })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Mean of the tree predictions, summed pairwise in tree order.
    pub fn predict(&self, x: &Row) -> f64 {
        let preds: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        let (lo, hi) = preds
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        (pairwise_sum(&preds) / preds.len() as f64).clamp(lo, hi)
    }
}

/// Recursive halving sum; the association order depends only on the length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Tree `t` draws its bootstrap and feature subsets from
/// `rng::stream(seed, Stream::Forest, t)`, so the result does not depend on
/// how trees are scheduled across threads.
pub fn fit_forest(x: &[Row], y: &[f64], params: &ForestParams) -> Result<RandomForest, ModelError> {
    check_xy(x, y)?;
    params.tree.validate()?;
    if params.n_trees == 0 {
        return Err(ModelError::InvalidParams("n_trees must be at least 1".into()));
    }
    let sorted = presort(x);
    let n = x.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(params.seed, Stream::Forest, t as u64);
            let weights = if params.bootstrap {
                let mut w = vec![0u32; n];
                for _ in 0..n {
                    w[rng::below(&mut rng, n)] += 1;
                }
                w
            } else {
                vec![1; n]
            };
            grow(x, y, &weights, &sorted, &params.tree, &mut rng)
        })
        .collect();
    Ok(RandomForest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::{fit_tree, Node};

    fn data(seed: u64, n: usize) -> (Vec<Row>, Vec<f64>) {
        let mut rng = rng::stream(seed, Stream::Synth, 0);
        let x: Vec<Row> = (0..n).map(|_| std::array::from_fn(|_| rng::unit(&mut rng))).collect();
        let y = x.iter().map(|r| if r[0] > 0.5 { 0.8 } else { 0.2 } + 0.1 * r[3]).collect();
        (x, y)
    }

    #[test]
    fn single_tree_without_bootstrap_matches_fit_tree() {
        let (x, y) = data(1, 200);
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            seed: 5,
            tree: TreeParams { features_per_split: 2, ..Default::default() },
        };
        let forest = fit_forest(&x, &y, &params).unwrap();
        let tree = fit_tree(&x, &y, &params.tree, &mut rng::stream(5, Stream::Forest, 0)).unwrap();
        assert_eq!(forest.trees()[0], tree);
        for r in &x {
            assert_eq!(forest.predict(r), tree.predict(r));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = data(2, 150);
        let params = ForestParams { n_trees: 20, seed: 3, ..Default::default() };
        assert_eq!(fit_forest(&x, &y, &params).unwrap(), fit_forest(&x, &y, &params).unwrap());
        let other = ForestParams { seed: 4, ..params };
        assert_ne!(fit_forest(&x, &y, &params).unwrap(), fit_forest(&x, &y, &other).unwrap());
    }

    #[test]
    fn ensemble_mean() {
        let leaf = |v| DecisionTree::from_nodes(vec![Node::Leaf { value: v }]).unwrap();
        let f = RandomForest::from_trees(vec![leaf(0.2), leaf(0.6)]).unwrap();
        assert_eq!(f.predict(&[0.0; 5]), 0.4);
        let same = RandomForest::from_trees((0..500).map(|_| leaf(0.7)).collect()).unwrap();
        assert_eq!(same.predict(&[1.0; 5]), 0.7);
        assert_eq!(RandomForest::from_trees(vec![]), Err(ModelError::UnfittedModel));
    }

    #[test]
    fn predictions_within_label_range() {
        let (x, y) = data(3, 300);
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 30, seed: 1, ..Default::default() }).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mut rng = rng::stream(10, Stream::Synth, 0);
        for _ in 0..500 {
            let probe: Row = std::array::from_fn(|_| rng::unit(&mut rng) * 3.0 - 1.0);
            let p = f.predict(&probe);
            assert!((lo..=hi).contains(&p));
        }
    }

    #[test]
    fn pairwise_sum_order() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(pairwise_sum(&[1e16, 1.0, -1e16, 1.0]), (1e16 + 1.0) + (-1e16 + 1.0));
    }

    #[test]
    fn zero_trees_rejected() {
        let (x, y) = data(4, 10);
        assert!(matches!(
            fit_forest(&x, &y, &ForestParams { n_trees: 0, ..Default::default() }),
            Err(ModelError::InvalidParams(_))
        ));
    }
}
