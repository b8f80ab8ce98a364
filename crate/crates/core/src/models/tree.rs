//! CART regression trees.
//!
//! Splits minimize the summed squared error of the two children, which is the
//! same as maximizing `S_l^2 / n_l + S_r^2 / n_r` over label sums `S` and
//! counts `n`. Candidate thresholds sit halfway between consecutive distinct
//! values of a feature. Ties go to the lower feature index, then to the
//! earlier candidate in ascending value order.

use rand::RngCore;

use super::{check_xy, ModelError, Row};
use crate::features::N_FEATURES;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split, drawn without replacement.
    pub features_per_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 6,
            min_samples_leaf: 1,
            features_per_split: N_FEATURES,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_depth < 1 {
            return Err(ModelError::InvalidParams("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(ModelError::InvalidParams("min_samples_leaf must be at least 1".into()));
        }
        if !(1..=N_FEATURES).contains(&self.features_per_split) {
            return Err(ModelError::InvalidParams(format!(
                "features_per_split must be in 1..={N_FEATURES}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Binary tree stored in preorder; node 0 is the root. Inputs with
/// `x[feature] <= threshold` descend left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub(crate) nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::UnfittedModel);
        }
        for (k, node) in nodes.iter().enumerate() {
            if let Node::Split { feature, left, right, threshold } = *node {
                if feature >= N_FEATURES || left <= k || right <= k || left >= nodes.len() || right >= nodes.len() || !threshold.is_finite() {
                    return Err(ModelError::CorruptModel(format!("invalid split at node {k}")));
                }
            }
        }
        Ok(DecisionTree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &Row) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> [bool; N_FEATURES] {
        let mut used = [false; N_FEATURES];
        for n in &self.nodes {
            if let Node::Split { feature, .. } = n {
                used[*feature] = true;
            }
        }
        used
    }
}

/// Row indices ordered by `(x[k], index)` for every feature.
pub(crate) fn presort(x: &[Row]) -> [Vec<u32>; N_FEATURES] {
    std::array::from_fn(|k| {
        let mut idx: Vec<u32> = (0..x.len() as u32).collect();
        idx.sort_by(|&a, &b| x[a as usize][k].total_cmp(&x[b as usize][k]).then(a.cmp(&b)));
        idx
    })
}

/// Fits one tree on every row with unit weight.
pub fn fit_tree<R: RngCore + ?Sized>(x: &[Row], y: &[f64], params: &TreeParams, rng: &mut R) -> Result<DecisionTree, ModelError> {
    check_xy(x, y)?;
    params.validate()?;
    let sorted = presort(x);
    Ok(grow(x, y, &vec![1; x.len()], &sorted, params, rng))
}

/// Fits one tree where row `r` counts `weights[r]` times (bootstrap
/// multiplicity). `sorted` comes from [`presort`] over the same `x`.
pub(crate) fn grow<R: RngCore + ?Sized>(
    x: &[Row],
    y: &[f64],
    weights: &[u32],
    sorted: &[Vec<u32>; N_FEATURES],
    params: &TreeParams,
    rng: &mut R,
) -> DecisionTree {
    let mut order: [Vec<u32>; N_FEATURES] =
        std::array::from_fn(|k| sorted[k].iter().copied().filter(|&r| weights[r as usize] > 0).collect());
    let n = order[0].len();
    let mut builder = Builder {
        x,
        y,
        weights,
        params,
        nodes: Vec::new(),
        goes_left: vec![false; x.len()],
        scratch: Vec::with_capacity(n),
    };
    builder.build(&mut order, 0, n, 0, rng);
    DecisionTree { nodes: builder.nodes }
}

struct Builder<'a> {
    x: &'a [Row],
    y: &'a [f64],
    weights: &'a [u32],
    params: &'a TreeParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

struct Candidate {
    feature: usize,
    /// Number of entries of the node segment that go left.
    left_len: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn build<R: RngCore + ?Sized>(&mut self, order: &mut [Vec<u32>; N_FEATURES], lo: usize, hi: usize, depth: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });

        let seg = &order[0][lo..hi];
        let (mut count, mut sum) = (0u64, 0.0f64);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in seg {
            let (w, label) = (self.weights[r as usize], self.y[r as usize]);
            count += w as u64;
            sum += w as f64 * label;
            min = min.min(label);
            max = max.max(label);
        }
        let leaf_value = if min == max { min } else { (sum / count as f64).clamp(min, max) };

        let min_leaf = self.params.min_samples_leaf as u64;
        if depth >= self.params.max_depth || min == max || count < 2 * min_leaf {
            self.nodes[id] = Node::Leaf { value: leaf_value };
            return id;
        }

        let Some(best) = self.best_split(order, lo, hi, count, sum, rng) else {
            self.nodes[id] = Node::Leaf { value: leaf_value };
            return id;
        };

        for &r in &order[best.feature][lo..lo + best.left_len] {
            self.goes_left[r as usize] = true;
        }
        for list in order.iter_mut() {
            self.scratch.clear();
            let seg = &mut list[lo..hi];
            let mut write = 0;
            for k in 0..seg.len() {
                let r = seg[k];
                if self.goes_left[r as usize] {
                    seg[write] = r;
                    write += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            seg[write..].copy_from_slice(&self.scratch);
        }
        for &r in &order[0][lo..lo + best.left_len] {
            self.goes_left[r as usize] = false;
        }

        let mid = lo + best.left_len;
        let left = self.build(order, lo, mid, depth + 1, rng);
        let right = self.build(order, mid, hi, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split<R: RngCore + ?Sized>(
        &self,
        order: &[Vec<u32>; N_FEATURES],
        lo: usize,
        hi: usize,
        count: u64,
        sum: f64,
        rng: &mut R,
    ) -> Option<Candidate> {
        let mut features: Vec<usize> = (0..N_FEATURES).collect();
        if self.params.features_per_split < N_FEATURES {
            for i in 0..self.params.features_per_split {
                let j = i + rng::below(rng, N_FEATURES - i);
                features.swap(i, j);
            }
            features.truncate(self.params.features_per_split);
            features.sort_unstable();
        }

        let min_leaf = self.params.min_samples_leaf as u64;
        let mut best: Option<Candidate> = None;
        for &f in &features {
            let seg = &order[f][lo..hi];
            let (mut left_count, mut left_sum) = (0u64, 0.0f64);
            for p in 0..seg.len() - 1 {
                let r = seg[p] as usize;
                let w = self.weights[r];
                left_count += w as u64;
                left_sum += w as f64 * self.y[r];
                let (here, next) = (self.x[r][f], self.x[seg[p + 1] as usize][f]);
                if here >= next {
                    continue;
                }
                let right_count = count - left_count;
                if left_count < min_leaf || right_count < min_leaf {
                    continue;
                }
                let right_sum = sum - left_sum;
                let score = left_sum * left_sum / left_count as f64 + right_sum * right_sum / right_count as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = here + (next - here) / 2.0;
                    if threshold >= next {
                        threshold = here;
                    }
                    best = Some(Candidate {
                        feature: f,
                        left_len: p + 1,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}
