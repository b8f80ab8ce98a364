//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use poachmap::dataset::{apply_scaler, fit_scaler, split, split_indices, SplitSpec};
use poachmap::evaluation::{grid_search, permutation_importance, r2, ImportanceReport, Lattice};
use poachmap::features::build_feature_grid;
use poachmap::geometry::{brute_force_distance, exact_distance_transform, squared_distance_transform, BooleanGrid};
use poachmap::heatmap::{gray_level, read_csv, Polarity};
use poachmap::labeling::{synthesize_labels, IncidentSet, LabelPolicy, LabeledSet};
use poachmap::landcover::GeoTransform;
use poachmap::models::{
    deserialize, fit_forest, fit_kernel_ridge, fit_mlp, ForestParams, KernelRidgeParams, Mlp, MlpParams, ModelFamily,
    Predictor, Regressor,
};
use poachmap::rng::{self, Stream};
use poachmap::synth::{generate_landcover, generate_scenario, truth_labels, BlobSpec, ScenarioParams};
use poachmap::FEATURE_NAMES;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut cells = 0;
    for seed in 0..100u64 {
        let density = 0.01 + 0.19 * seed as f64 / 99.0;
        let mask = common::random_mask(seed, 50, 50, density);
        let grid = BooleanGrid::new(50, 50, mask.clone()).unwrap();
        let fast = squared_distance_transform(&grid);
        let oracle = common::brute_squared(&mask, 50, 50);
        if fast != oracle {
            return Err(format!("squared distances differ on mask {seed}"));
        }
        let exact = exact_distance_transform(&grid);
        for r in 0..50 {
            for c in 0..50 {
                if exact.get(r, c) != brute_force_distance(&grid, r, c).unwrap() {
                    return Err(format!("distance differs at ({r}, {c}) of mask {seed}"));
                }
                cells += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(elapsed < 2.0, format!("100 masks, {cells} cells exact, {elapsed:.2} s"))
}

fn criterion_2() -> Outcome {
    let mut checked = 0;
    for k in 0..20u64 {
        let g = [4, 10, 20][k as usize % 3];
        let side = |x: u64| g * (1 + (rng::mix(x) % (200 / g as u64)) as usize);
        let (n_rows, n_cols) = (side(k), side(k + 1000));
        let scale = n_rows.min(n_cols);
        let spec = |count| BlobSpec::new(count, 1.max(scale / 20), 1.max(scale / 4));
        let params = ScenarioParams {
            n_rows,
            n_cols,
            g,
            seed: k,
            built_up: spec(4),
            trees: spec(if k == 7 { 0 } else { 3 }),
            grass: spec(3),
            wetland: spec(if k == 11 { 0 } else { 2 }),
            ..Default::default()
        };
        let grid = generate_landcover(&params).unwrap();
        let v = build_feature_grid(&grid, g).unwrap();
        let oracle = common::brute_features(&grid, g);
        for (idx, (f, o)) in v.vectors().iter().zip(&oracle).enumerate() {
            if f.to_array() != *o {
                return Err(format!("raster {k} ({n_rows}x{n_cols}, g={g}) cell {idx}: {:?} vs {o:?}", f.to_array()));
            }
        }
        checked += oracle.len();
    }
    Ok(format!("20 rasters, {checked} cells identical"))
}

fn uniform_grid(n: usize) -> poachmap::FeatureGrid {
    let vectors = vec![poachmap::FeatureVector::default(); n * n];
    poachmap::FeatureGrid::from_vectors(n, n, 1, GeoTransform::default(), vectors).unwrap()
}

fn criterion_3() -> Outcome {
    let v = uniform_grid(25);
    let single = IncidentSet::from_cells([(12, 12)], (25, 25)).unwrap();
    let set = synthesize_labels(&v, &single, &LabelPolicy::default()).unwrap();
    let positive: Vec<_> = set.rows.iter().filter(|r| r.label > 0.0).collect();
    if positive.len() != 361 || set.len() != 361 {
        return Err(format!("{} positive rows of {}", positive.len(), set.len()));
    }
    for row in &positive {
        let d = (row.cell.0 as i64 - 12).abs().max((row.cell.1 as i64 - 12).abs()) as f64;
        if row.label != 1.0 - 0.1 * d {
            return Err(format!("cell {:?} label {}", row.cell, row.label));
        }
    }
    let ring = |d: u32| positive.iter().filter(|r| r.distance == Some(d)).count();
    if ring(0) != 1 || (1..=9).any(|d| ring(d) != 8 * d as usize) {
        return Err("ring populations differ from 8d".into());
    }

    for seed in 0..10u64 {
        let mut r = rng::stream(seed, Stream::Synth, 7);
        let n = 30 + rng::below(&mut r, 40);
        let v = uniform_grid(n);
        let k = 1 + rng::below(&mut r, 6);
        let points: Vec<(usize, usize)> = (0..k).map(|_| (rng::below(&mut r, n), rng::below(&mut r, n))).collect();
        let zero_radius = 12 + rng::below(&mut r, 10) as u32;
        let policy = LabelPolicy { zero_radius, ..Default::default() };
        let incidents = IncidentSet::from_cells(points.iter().copied(), (n, n)).unwrap();
        let got = synthesize_labels(&v, &incidents, &policy).unwrap();
        let dist = common::brute_chebyshev(&points, n, n);
        let expected: Vec<((usize, usize), f64)> = (0..n * n)
            .filter_map(|c| common::brute_label(dist[c], zero_radius).map(|l| ((c / n, c % n), l)))
            .collect();
        let actual: Vec<((usize, usize), f64)> = got.rows.iter().map(|r| (r.cell, r.label)).collect();
        if actual != expected {
            return Err(format!("multi-incident configuration {seed} differs from oracle"));
        }
    }
    Ok("361 positives with ring labels 1 - 0.1d; 10 multi-incident configurations match".into())
}

fn criterion_4() -> Outcome {
    let sizes = SplitSpec::new(0).sizes(13956);
    if sizes != (8373, 2791, 2792) {
        return Err(format!("sizes {sizes:?}"));
    }
    for seed in 0..50u64 {
        let idx = split_indices(13956, &SplitSpec::new(seed)).unwrap();
        let mut all: Vec<usize> = idx.train.iter().chain(&idx.val).chain(&idx.test).copied().collect();
        all.sort_unstable();
        if all != (0..13956).collect::<Vec<_>>() || (idx.train.len(), idx.val.len(), idx.test.len()) != sizes {
            return Err(format!("seed {seed} is not a partition"));
        }
    }
    Ok("(8373, 2791, 2792); partition holds on 50 seeds".into())
}

struct Benchmark {
    forest: Regressor,
    val: LabeledSet,
}

fn criterion_5() -> (Outcome, Option<Benchmark>) {
    let start = Instant::now();
    let seed = 0;
    let scenario = generate_scenario(&ScenarioParams { seed, ..Default::default() }).unwrap();
    let set = truth_labels(&scenario.features, &scenario.truth, scenario.params.noise_sigma, seed).unwrap();
    let (train, val, test) = split(&set, &SplitSpec::new(seed)).unwrap();
    let (x, y) = (train.features(), train.labels());
    let (vx, vy) = (val.features(), val.labels());
    let (tx, ty) = (test.features(), test.labels());

    let forest = Regressor::RandomForest(fit_forest(&x, &y, &ForestParams { seed, ..Default::default() }).unwrap());
    let rf = r2(&forest.predict_rows(&tx), &ty).unwrap();

    let scaler = fit_scaler(&x, "train").unwrap();
    let (zx, zv, zt) = (apply_scaler(&scaler, &x), apply_scaler(&scaler, &vx), apply_scaler(&scaler, &tx));
    let krr = fit_kernel_ridge(&zx, &y, &KernelRidgeParams { seed, ..Default::default() }).unwrap();
    let kr = r2(&zt.iter().map(|r| krr.predict(r)).collect::<Vec<_>>(), &ty).unwrap();
    let mlp = fit_mlp(&zx, &y, &zv, &vy, &MlpParams { seed, ..Default::default() }).unwrap().model;
    let mr = r2(&zt.iter().map(|r| mlp.predict(r)).collect::<Vec<_>>(), &ty).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let detail = format!(
        "test R²: forest {rf:.3}, kernel ridge {kr:.3}, mlp {mr:.3}; {elapsed:.1} s"
    );
    let ok = rf >= 0.8 && kr >= 0.3 && mr >= 0.3 && rf > kr && rf > mr && elapsed < 120.0;

    // Reference only: kernel ridge with lambda chosen on the validation split.
    let tuned = grid_search(&Lattice::default_for(ModelFamily::KernelRidge, seed), &zx, &y, &zv, &vy).unwrap();
    println!(
        "    note: grid-searched kernel ridge ({}) reaches test R² {:.3}",
        tuned.best_point(),
        r2(&tuned.model.predict_rows(&zt), &ty).unwrap()
    );
    (check(ok, detail), Some(Benchmark { forest, val }))
}

fn criterion_6(bench: Option<&Benchmark>) -> Outcome {
    let Some(b) = bench else {
        return Err("benchmark unavailable".into());
    };
    let rep: ImportanceReport = permutation_importance(&b.forest, &b.val.features(), &b.val.labels(), 10, 0).unwrap();
    let detail = FEATURE_NAMES
        .iter()
        .zip(rep.mean)
        .map(|(n, m)| format!("{n} {m:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(rep.mean[1] < 0.05 && rep.mean[2] < 0.05 && rep.argmax() == 0, detail)
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = rng::stream(seed, Stream::Mlp, 77);
        let hidden: Vec<usize> = (0..1 + rng::below(&mut r, 3)).map(|_| 1 + rng::below(&mut r, 4)).collect();
        let net = Mlp::init(5, &hidden, &mut r);
        let n = 3 + rng::below(&mut r, 8);
        let x = common::random_rows(seed, n, 2.0);
        let y: Vec<f64> = (0..n).map(|_| rng::unit(&mut r) * 2.0 - 1.0).collect();
        let p = net.params();
        let (_, analytic) = net.loss_and_gradient(&x, &y);
        let loss_at = |q: &[f64]| {
            let mut m = net.clone();
            m.set_params(q);
            m.loss_and_gradient(&x, &y).0
        };
        for k in 0..p.len() {
            let numeric = common::central_difference(loss_at, &p, k, 1e-5);
            let scale = analytic[k].abs().max(numeric.abs());
            if scale > 1e-8 {
                worst = worst.max((analytic[k] - numeric).abs() / scale);
            }
        }
    }
    check(worst <= 1e-5, format!("max relative error {worst:.2e} over 20 networks"))
}

fn criterion_8() -> Outcome {
    for seed in 0..10u64 {
        let x = common::random_rows(seed, 300, 1.0);
        let y: Vec<f64> = x.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[3] + 0.2 * r[4]).collect();
        let mut r = rng::stream(seed, Stream::Synth, 8);
        let scale: [f64; 5] = std::array::from_fn(|_| 0.1 + 10.0 * rng::unit(&mut r));
        let shift: [f64; 5] = std::array::from_fn(|_| 50.0 * rng::unit(&mut r) - 25.0);
        let t = |row: &[f64; 5]| -> [f64; 5] { std::array::from_fn(|k| row[k] * scale[k] + shift[k]) };
        let params = ForestParams { n_trees: 40, seed, ..Default::default() };
        let a = fit_forest(&x, &y, &params).unwrap();
        let tx: Vec<[f64; 5]> = x.iter().map(t).collect();
        let b = fit_forest(&tx, &y, &params).unwrap();
        let probes = common::random_rows(seed + 100, 500, 1.2);
        for p in x.iter().chain(&probes) {
            if a.predict(p).to_bits() != b.predict(&t(p)).to_bits() {
                return Err(format!("dataset {seed}: prediction differs at {p:?}"));
            }
        }
    }
    Ok("10 datasets, forest predictions bit-identical under positive affine maps".into())
}

const PIPELINE_CONFIG: &str = r#"
seed = 11
[features]
g = 20
[labels]
zero_radius = 20
"#;

fn run_cli(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_poachmap"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run poachmap")
}

fn criterion_9(dir: &Path) -> Outcome {
    std::fs::write(dir.join("run.toml"), PIPELINE_CONFIG).unwrap();
    let synth = run_cli(&["--config", "run.toml", "--out", "scenario", "synth"], dir);
    if !synth.status.success() {
        return Err(format!("synth failed: {}", String::from_utf8_lossy(&synth.stderr)));
    }
    let mut manifests = Vec::new();
    for out in ["a", "b"] {
        let res = run_cli(
            &[
                "--config",
                "run.toml",
                "--raster",
                "scenario/raster.asc",
                "--incidents",
                "scenario/incidents.csv",
                "--out",
                out,
                "pipeline",
            ],
            dir,
        );
        if !res.status.success() {
            return Err(format!("pipeline failed: {}", String::from_utf8_lossy(&res.stderr)));
        }
        manifests.push(std::fs::read_to_string(dir.join(out).join("manifest.txt")).unwrap());
    }
    let artifacts = manifests[0].lines().filter(|l| l.starts_with("artifact ")).count();
    check(
        manifests[0] == manifests[1] && artifacts == 6,
        format!("{artifacts} artifacts, manifests identical: {}", manifests[0] == manifests[1]),
    )
}

fn criterion_10(dir: &Path) -> Outcome {
    let run = dir.join("a");
    let model = deserialize(&std::fs::read_to_string(run.join("model.txt")).unwrap()).unwrap();
    let v = poachmap::features::import_features(std::io::BufReader::new(
        std::fs::File::open(run.join("features.csv")).unwrap(),
    ))
    .unwrap();
    let p = read_csv(
        std::io::BufReader::new(std::fs::File::open(run.join("heatmap.csv")).unwrap()),
        GeoTransform::default(),
    )
    .unwrap();
    let mut r = rng::stream(10, Stream::Synth, 10);
    for _ in 0..1000 {
        let k = rng::below(&mut r, v.len());
        let x = v.vectors()[k].to_array();
        let raw = match &model.scaler {
            Some(s) => model.regressor.predict(&s.transform(&x)),
            None => model.regressor.predict(&x),
        };
        let expected = raw.clamp(0.0, 1.0);
        if p.values()[k].to_bits() != expected.to_bits() {
            return Err(format!("cell {k}: {} vs {expected}", p.values()[k]));
        }
    }
    let pgm = std::fs::read(run.join("heatmap.pgm")).unwrap();
    let header = format!("P5\n{} {}\n255\n", p.dims().1, p.dims().0);
    if !pgm.starts_with(header.as_bytes()) || pgm.len() != header.len() + p.values().len() {
        return Err("PGM layout".into());
    }
    let pixels = &pgm[header.len()..];
    let argmax = (0..p.values().len()).fold(0, |b, k| if p.values()[k] > p.values()[b] { k } else { b });
    let darkest = *pixels.iter().min().unwrap();
    let ok = pixels[argmax] == darkest && pixels[argmax] == gray_level(p.values()[argmax], Polarity::DarkHigh);
    check(
        ok,
        format!(
            "1000 cells bit-equal; max p {:.3} renders gray {} (darkest {darkest})",
            p.values()[argmax],
            pixels[argmax]
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut failed = 0;
    let mut report = |n: usize, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2}: {tag}  {detail}");
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    let (c5, bench) = criterion_5();
    report(5, c5);
    report(6, criterion_6(bench.as_ref()));
    report(7, criterion_7());
    report(8, criterion_8());
    report(9, criterion_9(dir.path()));
    report(10, criterion_10(dir.path()));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
