//! Pipeline stages behind the command-line subcommands.
//!
//! Each `cmd_*` function reads its inputs from the [`Config`], writes its
//! artifacts under `config.out` and returns what it produced.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::dataset::{apply_scaler, fit_scaler, split};
use crate::error::{Error, Result};
use crate::evaluation::{grid_search, permutation_importance, r2, ImportanceReport, ScoreReport};
use crate::features::{build_feature_grid_with, export_features, import_features, FeatureGrid};
use crate::heatmap::{generate_heatmap_for, write_csv, write_pgm, Polarity, ProbabilityGrid};
use crate::labeling::{
    export_labels, import_labels, label_stats, parse_incidents, synthesize_labels, write_incidents, IncidentSet,
    LabeledSet,
};
use crate::landcover::{parse_ascii_grid, validate, write_ascii_grid, LandCoverGrid, SemanticClass};
use crate::models::{deserialize, serialize, FittedModel, Predictor};
use crate::synth::{generate_scenario, write_truth, Scenario};

pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MODEL_FILE: &str = "model.txt";
pub const SCORES_FILE: &str = "scores.csv";
pub const HEATMAP_PGM_FILE: &str = "heatmap.pgm";
pub const HEATMAP_CSV_FILE: &str = "heatmap.csv";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const RASTER_FILE: &str = "raster.asc";
pub const INCIDENTS_FILE: &str = "incidents.csv";
pub const TRUTH_FILE: &str = "truth.csv";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{key} is not set")))
}

/// Creates `dir/name` and hands a buffered writer to `body`.
fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

pub fn load_landcover(cfg: &Config) -> Result<LandCoverGrid> {
    let path = required(&cfg.paths.raster, "raster")?;
    let grid = parse_ascii_grid(&read_text(path)?, cfg.class_map()?, cfg.raster.strict)?;
    let report = validate(&grid, cfg.raster.strict)?;
    log::info!(
        "raster {}: {}x{} pixels, classes {:?}, {} unmapped codes",
        path.display(),
        grid.n_rows(),
        grid.n_cols(),
        SemanticClass::ALL.map(|c| (c.name(), report.count(c))),
        report.unmapped.len()
    );
    Ok(grid)
}

fn featurize(cfg: &Config, grid: &LandCoverGrid) -> Result<FeatureGrid> {
    let v = build_feature_grid_with(grid, cfg.feature_options())?;
    if v.no_forest {
        log::warn!("no window contains trees; d_f is the sentinel everywhere");
    }
    if v.no_wetland {
        log::warn!("no window contains wetland; d_w is the sentinel everywhere");
    }
    Ok(v)
}

fn load_incidents(cfg: &Config, grid: &LandCoverGrid, v: &FeatureGrid) -> Result<IncidentSet> {
    let path = required(&cfg.paths.incidents, "incidents")?;
    Ok(parse_incidents(&read_text(path)?, grid.geo(), cfg.features.g, v.dims())?)
}

fn label(cfg: &Config, grid: &LandCoverGrid, v: &FeatureGrid) -> Result<LabeledSet> {
    let incidents = load_incidents(cfg, grid, v)?;
    let set = synthesize_labels(v, &incidents, &cfg.label_policy())?;
    let stats = label_stats(&set);
    log::info!(
        "{} incidents -> {} positive and {} zero rows",
        incidents.len(),
        stats.positive,
        stats.zero
    );
    Ok(set)
}

/// Raster to `features.csv`.
pub fn cmd_featurize(cfg: &Config) -> Result<FeatureGrid> {
    let grid = load_landcover(cfg)?;
    let v = featurize(cfg, &grid)?;
    write_file(&cfg.out, FEATURES_FILE, |w| export_features(&v, w))?;
    Ok(v)
}

/// Raster and incidents to `labels.csv`.
pub fn cmd_label(cfg: &Config) -> Result<LabeledSet> {
    let grid = load_landcover(cfg)?;
    let v = featurize(cfg, &grid)?;
    let set = label(cfg, &grid, &v)?;
    write_file(&cfg.out, LABELS_FILE, |w| export_labels(&set, w))?;
    Ok(set)
}

fn labels_for_training(cfg: &Config) -> Result<LabeledSet> {
    match &cfg.paths.labels {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            Ok(import_labels(BufReader::new(file))?)
        }
        None => {
            let grid = load_landcover(cfg)?;
            let v = featurize(cfg, &grid)?;
            label(cfg, &grid, &v)
        }
    }
}

/// Splits, standardizes when the family needs it, then fits one
/// parameter set or grid-searches the configured lattice.
pub fn train(cfg: &Config, set: &LabeledSet) -> Result<(FittedModel, ScoreReport)> {
    let family = cfg.family()?;
    let (train, val, test) = split(set, &cfg.split_spec())?;
    let (mut x, y) = (train.features(), train.labels());
    let (mut vx, vy) = (val.features(), val.labels());
    let (mut tx, ty) = (test.features(), test.labels());
    let scaler = if family.needs_scaling() {
        let s = fit_scaler(&x, "train")?;
        x = apply_scaler(&s, &x);
        vx = apply_scaler(&s, &vx);
        tx = apply_scaler(&s, &tx);
        Some(s)
    } else {
        None
    };
    let (regressor, params, lattice) = if cfg.model.grid_search {
        let res = grid_search(&cfg.lattice()?, &x, &y, &vx, &vy)?;
        (res.model.clone(), res.best_point().to_string(), res.scores)
    } else {
        let point = cfg.param_point()?;
        (point.fit(&x, &y, &vx, &vy)?, point.to_string(), Vec::new())
    };
    let report = ScoreReport {
        family,
        params,
        train_r2: r2(&regressor.predict_rows(&x), &y)?,
        val_r2: r2(&regressor.predict_rows(&vx), &vy)?,
        test_r2: r2(&regressor.predict_rows(&tx), &ty)?,
        lattice,
    };
    log::info!("{report}");
    Ok((FittedModel::new(regressor, scaler), report))
}

/// Labels to `model.txt` and `scores.csv`.
pub fn cmd_train(cfg: &Config) -> Result<(FittedModel, ScoreReport)> {
    let set = labels_for_training(cfg)?;
    let (model, report) = train(cfg, &set)?;
    write_file(&cfg.out, MODEL_FILE, |w| w.write_all(serialize(&model).as_bytes()))?;
    write_file(&cfg.out, SCORES_FILE, |w| report.write_csv(w))?;
    Ok((model, report))
}

fn model_path(cfg: &Config) -> PathBuf {
    cfg.paths.model.clone().unwrap_or_else(|| cfg.out.join(MODEL_FILE))
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    Ok(deserialize(&read_text(path)?)?)
}

fn polarity(cfg: &Config) -> Polarity {
    if cfg.heatmap.invert {
        Polarity::LightHigh
    } else {
        Polarity::DarkHigh
    }
}

fn emit_heatmap(cfg: &Config, model: &FittedModel, v: &FeatureGrid) -> Result<ProbabilityGrid> {
    let p = generate_heatmap_for(model, v)?;
    write_file(&cfg.out, HEATMAP_PGM_FILE, |w| write_pgm(&p, polarity(cfg), w))?;
    write_file(&cfg.out, HEATMAP_CSV_FILE, |w| write_csv(&p, w))?;
    Ok(p)
}

/// Model and `V` to `heatmap.pgm` and `heatmap.csv`. `V` comes from
/// `paths.features` when set, else from the raster.
pub fn cmd_heatmap(cfg: &Config) -> Result<ProbabilityGrid> {
    let model = load_model(&model_path(cfg))?;
    let v = match &cfg.paths.features {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            import_features(BufReader::new(file))?
        }
        None => featurize(cfg, &load_landcover(cfg)?)?,
    };
    emit_heatmap(cfg, &model, &v)
}

fn importance(cfg: &Config, model: &FittedModel, set: &LabeledSet) -> Result<ImportanceReport> {
    let (_, val, _) = split(set, &cfg.split_spec())?;
    let report = permutation_importance(model, &val.features(), &val.labels(), cfg.importance.n_repeats, cfg.seed)?;
    log::info!("permutation importance: {report}");
    write_file(&cfg.out, IMPORTANCE_FILE, |w| report.write_csv(w))?;
    Ok(report)
}

/// Permutation importance of the model on the validation split.
pub fn cmd_importance(cfg: &Config) -> Result<ImportanceReport> {
    let model = load_model(&model_path(cfg))?;
    let set = labels_for_training(cfg)?;
    importance(cfg, &model, &set)
}

/// Writes `raster.asc`, `incidents.csv` and `truth.csv` for a synthetic scenario.
pub fn cmd_synth(cfg: &Config) -> Result<Scenario> {
    let scenario = generate_scenario(&cfg.scenario())?;
    write_file(&cfg.out, RASTER_FILE, |w| write_ascii_grid(&scenario.landcover, w))?;
    write_file(&cfg.out, INCIDENTS_FILE, |w| write_incidents(&scenario.incidents, w))?;
    write_file(&cfg.out, TRUTH_FILE, |w| write_truth(&scenario.truth, w))?;
    Ok(scenario)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// `artifact` for pipeline products, `report` for the score summary.
    pub kind: &'static str,
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    fn add(&mut self, kind: &'static str, path: &Path) -> Result<()> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.entries.push(ManifestEntry {
            kind,
            name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        });
        Ok(())
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.kind == "artifact")
    }

    /// One `kind name bytes sha256` line per entry.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{} {} {} {}\n", e.kind, e.name, e.bytes, e.sha256))
            .collect()
    }
}

/// Featurize, label, train, heatmap and importance in order, stopping at
/// the first failure, then `manifest.txt`.
pub fn cmd_pipeline(cfg: &Config) -> Result<Manifest> {
    let mut manifest = Manifest::default();
    let grid = load_landcover(cfg)?;
    let v = featurize(cfg, &grid)?;
    let features = write_file(&cfg.out, FEATURES_FILE, |w| export_features(&v, w))?;

    let set = label(cfg, &grid, &v)?;
    let labels = write_file(&cfg.out, LABELS_FILE, |w| export_labels(&set, w))?;

    let (model, report) = train(cfg, &set)?;
    let model_file = write_file(&cfg.out, MODEL_FILE, |w| w.write_all(serialize(&model).as_bytes()))?;
    let scores = write_file(&cfg.out, SCORES_FILE, |w| report.write_csv(w))?;

    emit_heatmap(cfg, &model, &v)?;
    importance(cfg, &model, &set)?;

    for path in [
        features,
        labels,
        model_file,
        cfg.out.join(HEATMAP_PGM_FILE),
        cfg.out.join(HEATMAP_CSV_FILE),
        cfg.out.join(IMPORTANCE_FILE),
    ] {
        manifest.add("artifact", &path)?;
    }
    manifest.add("report", &scores)?;
    let text = manifest.to_text();
    write_file(&cfg.out, MANIFEST_FILE, |w| w.write_all(text.as_bytes()))?;
    Ok(manifest)
}
