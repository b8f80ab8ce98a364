mod common;

use proptest::prelude::*;

use poachmap::dataset::{fit_scaler, split_indices, SplitSpec};
use poachmap::evaluation::r2;
use poachmap::geometry::{squared_distance_transform, BooleanGrid};
use poachmap::heatmap::{clamp_probability, gray_level, Polarity};
use poachmap::labeling::{synthesize_labels, IncidentSet, LabelPolicy};
use poachmap::landcover::GeoTransform;
use poachmap::models::{
    deserialize, fit_forest, fit_kernel_ridge, serialize, FittedModel, ForestParams, KernelRidgeParams, Mlp,
    Regressor, TreeParams,
};
use poachmap::rng::{self, Stream};
use poachmap::{FeatureGrid, FeatureVector};

fn rows(seed: u64, n: usize) -> (Vec<[f64; 5]>, Vec<f64>) {
    let x = common::random_rows(seed, n, 3.0);
    let y = x.iter().map(|r| (r[0] - r[2]).tanh() + 0.1 * r[4]).collect();
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_transform_matches_brute_force(
        seed in 0u64..10_000,
        n_rows in 1usize..24,
        n_cols in 1usize..24,
        density in 0.0f64..0.4,
    ) {
        let mask = common::random_mask(seed, n_rows, n_cols, density);
        let grid = BooleanGrid::new(n_rows, n_cols, mask.clone()).unwrap();
        prop_assert_eq!(squared_distance_transform(&grid), common::brute_squared(&mask, n_rows, n_cols));
    }

    #[test]
    fn labels_follow_the_ring_rule(
        cells in proptest::collection::vec((0usize..30, 0usize..30), 1..5),
        zero_radius in 10u32..25,
    ) {
        let v = FeatureGrid::from_vectors(30, 30, 1, GeoTransform::default(), vec![FeatureVector::default(); 900]).unwrap();
        let incidents = IncidentSet::from_cells(cells.iter().copied(), (30, 30)).unwrap();
        let policy = LabelPolicy { zero_radius, ..Default::default() };
        let set = synthesize_labels(&v, &incidents, &policy).unwrap();
        let dist = common::brute_chebyshev(&cells, 30, 30);
        let expected: Vec<_> = (0..900)
            .filter_map(|k| common::brute_label(dist[k], zero_radius).map(|l| ((k / 30, k % 30), l)))
            .collect();
        let actual: Vec<_> = set.rows.iter().map(|r| (r.cell, r.label)).collect();
        prop_assert_eq!(actual, expected);
    }

    #[test]
    fn split_is_a_partition(n in 5usize..2000, seed in any::<u64>()) {
        let idx = split_indices(n, &SplitSpec::new(seed)).unwrap();
        let mut all: Vec<usize> = idx.train.iter().chain(&idx.val).chain(&idx.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn standardized_training_rows_are_centered(seed in 0u64..1000, n in 3usize..200) {
        let x = common::random_rows(seed, n, 10.0);
        let s = fit_scaler(&x, "train").unwrap();
        for k in 0..5 {
            let col: Vec<f64> = x.iter().map(|r| s.transform(r)[k]).collect();
            prop_assert!(common::mean(&col).abs() < 1e-9);
        }
    }

    #[test]
    fn r2_never_exceeds_one(
        pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..60),
    ) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(score) = r2(&p, &t) {
            prop_assert!(score <= 1.0);
        }
        if let Ok(score) = r2(&t, &t) {
            prop_assert_eq!(score, 1.0);
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences(seed in 0u64..10_000) {
        let mut r = rng::stream(seed, Stream::Mlp, 5);
        let hidden = [1 + rng::below(&mut r, 4), 1 + rng::below(&mut r, 3)];
        let net = Mlp::init(5, &hidden, &mut r);
        let (x, y) = rows(seed, 6);
        let p = net.params();
        let (_, grad) = net.loss_and_gradient(&x, &y);
        let loss_at = |q: &[f64]| {
            let mut m = net.clone();
            m.set_params(q);
            m.loss_and_gradient(&x, &y).0
        };
        for k in 0..p.len() {
            let numeric = common::central_difference(loss_at, &p, k, 1e-5);
            let scale = grad[k].abs().max(numeric.abs());
            if scale > 1e-8 {
                prop_assert!((grad[k] - numeric).abs() / scale <= 1e-5, "param {}: {} vs {}", k, grad[k], numeric);
            }
        }
    }

    #[test]
    fn forest_is_invariant_to_positive_affine_maps(
        seed in 0u64..1000,
        scale in proptest::array::uniform5(0.01f64..100.0),
        shift in proptest::array::uniform5(-100.0f64..100.0),
    ) {
        let (x, y) = rows(seed, 80);
        let t = |r: &[f64; 5]| -> [f64; 5] { std::array::from_fn(|k| r[k] * scale[k] + shift[k]) };
        let params = ForestParams { n_trees: 8, seed, ..Default::default() };
        let a = fit_forest(&x, &y, &params).unwrap();
        let b = fit_forest(&x.iter().map(t).collect::<Vec<_>>(), &y, &params).unwrap();
        for p in common::random_rows(seed + 1, 50, 3.5) {
            prop_assert_eq!(a.predict(&p).to_bits(), b.predict(&t(&p)).to_bits());
        }
    }

    #[test]
    fn serialization_round_trips_bit_exactly(seed in 0u64..1000, depth in 1usize..6) {
        let (x, y) = rows(seed, 60);
        let forest = fit_forest(&x, &y, &ForestParams {
            n_trees: 5,
            tree: TreeParams { max_depth: depth, ..Default::default() },
            seed,
            ..Default::default()
        }).unwrap();
        let scaler = fit_scaler(&x, "train").unwrap();
        let krr = fit_kernel_ridge(&x, &y, &KernelRidgeParams { seed, ..Default::default() }).unwrap();
        let models = [
            FittedModel::new(Regressor::RandomForest(forest), None),
            FittedModel::new(Regressor::KernelRidge(krr), Some(scaler)),
        ];
        for m in &models {
            let text = serialize(m);
            let back = deserialize(&text).unwrap();
            prop_assert_eq!(serialize(&back), text);
            for p in common::random_rows(seed + 2, 40, 4.0) {
                prop_assert_eq!(m.predict(&p).to_bits(), back.predict(&p).to_bits());
            }
        }
    }

    #[test]
    fn gray_levels_are_monotone(a in -0.5f64..1.5, b in -0.5f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (lo, hi) = (clamp_probability(lo), clamp_probability(hi));
        prop_assert!(gray_level(lo, Polarity::DarkHigh) >= gray_level(hi, Polarity::DarkHigh));
        prop_assert!(gray_level(lo, Polarity::LightHigh) <= gray_level(hi, Polarity::LightHigh));
    }
}
