//! Run configuration: a TOML file of `key = value` entries grouped in
//! sections, every key optional.
//!
//! ```toml
//! seed = 7
//! out = "run"
//!
//! [paths]
//! raster = "plot.asc"
//! incidents = "incidents.csv"
//!
//! [features]
//! g = 20
//!
//! [labels]
//! zero_radius = 30
//!
//! [model]
//! family = "random_forest"
//! grid_search = false
//!
//! [model.forest]
//! n_trees = 500
//! max_depth = 6
//! ```
//!
//! Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::SplitSpec;
use crate::error::{Error, Result};
use crate::evaluation::{Lattice, ParamPoint};
use crate::features::FeatureOptions;
use crate::labeling::LabelPolicy;
use crate::landcover::{ClassMap, SemanticClass};
use crate::models::{ForestParams, KernelRidgeParams, MlpParams, ModelFamily, TreeParams};
use crate::synth::ScenarioParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root of every random stream in the run.
    pub seed: u64,
    pub out: PathBuf,
    pub paths: Paths,
    pub raster: RasterConfig,
    pub features: FeaturesConfig,
    pub labels: LabelsConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub importance: ImportanceConfig,
    pub heatmap: HeatmapConfig,
    pub synth: ScenarioParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            out: PathBuf::from("out"),
            paths: Paths::default(),
            raster: RasterConfig::default(),
            features: FeaturesConfig::default(),
            labels: LabelsConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            grid: GridConfig::default(),
            importance: ImportanceConfig::default(),
            heatmap: HeatmapConfig::default(),
            synth: ScenarioParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// ESRI ASCII land-cover raster.
    pub raster: Option<PathBuf>,
    /// Incident CSV with an `i,j` or `lat,lon` header.
    pub incidents: Option<PathBuf>,
    /// Precomputed label CSV; `train` uses it instead of the raster.
    pub labels: Option<PathBuf>,
    /// Precomputed feature CSV; `heatmap` uses it instead of the raster.
    pub features: Option<PathBuf>,
    /// Model file read by `heatmap` and `importance`.
    pub model: Option<PathBuf>,
}

#[derive(Default, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    /// Reject codes missing from the class map instead of mapping them to Other.
    pub strict: bool,
    /// Raster code to class name overrides on top of the WorldCover map,
    /// e.g. `"11" = "wetland"`.
    pub classes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub g: usize,
    pub min_tree_pixels: u32,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            g: 20,
            min_tree_pixels: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsConfig {
    pub decay_step: f64,
    pub positive_radius: u32,
    pub zero_radius: u32,
}

impl Default for LabelsConfig {
    fn default() -> Self {
        let p = LabelPolicy::default();
        LabelsConfig {
            decay_step: p.decay_step,
            positive_radius: p.positive_radius,
            zero_radius: p.zero_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::new(0);
        SplitConfig {
            train: s.train_frac,
            val: s.val_frac,
            test: s.test_frac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `random_forest`, `kernel_ridge` or `mlp`.
    pub family: String,
    pub grid_search: bool,
    pub forest: ForestConfig,
    pub kernel_ridge: KernelRidgeConfig,
    pub mlp: MlpConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: ModelFamily::RandomForest.name().to_string(),
            grid_search: false,
            forest: ForestConfig::default(),
            kernel_ridge: KernelRidgeConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let f = ForestParams::default();
        ForestConfig {
            n_trees: f.n_trees,
            max_depth: f.tree.max_depth,
            min_samples_leaf: f.tree.min_samples_leaf,
            features_per_split: f.tree.features_per_split,
            bootstrap: f.bootstrap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelRidgeConfig {
    /// Omit for `1 / (5 * mean feature variance)`.
    pub gamma: Option<f64>,
    pub lambda: f64,
    pub max_rows: usize,
    pub subsample: bool,
    pub fit_intercept: bool,
}

impl Default for KernelRidgeConfig {
    fn default() -> Self {
        let k = KernelRidgeParams::default();
        KernelRidgeConfig {
            gamma: k.gamma,
            lambda: k.lambda,
            max_rows: k.max_rows,
            subsample: k.subsample,
            fit_intercept: k.fit_intercept,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub patience: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        let m = MlpParams::default();
        MlpConfig {
            hidden: m.hidden,
            learning_rate: m.learning_rate,
            max_iter: m.max_iter,
            patience: m.patience,
        }
    }
}

/// Lattice axes for `grid_search = true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub forest_max_depth: Vec<usize>,
    pub forest_n_trees: Vec<usize>,
    pub kernel_ridge_lambda: Vec<f64>,
    pub mlp_learning_rate: Vec<f64>,
    pub mlp_max_iter: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let axes = |f| Lattice::default_for(f, 0);
        let Lattice::RandomForest { max_depth, n_trees, .. } = axes(ModelFamily::RandomForest) else {
            unreachable!()
        };
        let Lattice::KernelRidge { lambda, .. } = axes(ModelFamily::KernelRidge) else {
            unreachable!()
        };
        let Lattice::Mlp { learning_rate, max_iter, .. } = axes(ModelFamily::Mlp) else {
            unreachable!()
        };
        GridConfig {
            forest_max_depth: max_depth,
            forest_n_trees: n_trees,
            kernel_ridge_lambda: lambda,
            mlp_learning_rate: learning_rate,
            mlp_max_iter: max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceConfig {
    pub n_repeats: usize,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig { n_repeats: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    /// Render high probability light instead of dark.
    pub invert: bool,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Config::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.out);
        for p in [
            &mut self.paths.raster,
            &mut self.paths.incidents,
            &mut self.paths.labels,
            &mut self.paths.features,
            &mut self.paths.model,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Effective configuration with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unserializable config: {e}\n"))
    }

    /// Enforces downstream numeric constraints up front.
    pub fn validate(&self) -> Result<()> {
        self.class_map()?;
        if self.features.g == 0 {
            return Err(invalid("features.g must be at least 1"));
        }
        if self.features.min_tree_pixels == 0 {
            return Err(invalid("features.min_tree_pixels must be at least 1"));
        }
        let wrap = |e: &dyn std::fmt::Display| invalid(e.to_string());
        self.label_policy().validate().map_err(|e| wrap(&e))?;
        self.split_spec().validate().map_err(|e| wrap(&e))?;
        self.family()?;
        self.forest_params().tree.validate().map_err(|e| wrap(&e))?;
        if self.model.forest.n_trees == 0 {
            return Err(invalid("model.forest.n_trees must be at least 1"));
        }
        let k = &self.model.kernel_ridge;
        if !(k.lambda > 0.0) || k.gamma.is_some_and(|g| !(g > 0.0)) || k.max_rows == 0 {
            return Err(invalid("model.kernel_ridge needs lambda > 0, gamma > 0 and max_rows >= 1"));
        }
        self.mlp_params().validate().map_err(|e| wrap(&e))?;
        if self.importance.n_repeats == 0 {
            return Err(invalid("importance.n_repeats must be at least 1"));
        }
        let g = &self.grid;
        if self.model.grid_search {
            let empty = match self.family()? {
                ModelFamily::RandomForest => g.forest_max_depth.is_empty() || g.forest_n_trees.is_empty(),
                ModelFamily::KernelRidge => g.kernel_ridge_lambda.is_empty(),
                ModelFamily::Mlp => g.mlp_learning_rate.is_empty() || g.mlp_max_iter.is_empty(),
            };
            if empty {
                return Err(invalid("grid search needs at least one value on every axis"));
            }
        }
        self.scenario().validate().map_err(|e| wrap(&e))?;
        Ok(())
    }

    pub fn class_map(&self) -> Result<ClassMap> {
        let mut map = ClassMap::worldcover();
        for (code, class) in &self.raster.classes {
            let code: i32 = code
                .trim()
                .parse()
                .map_err(|_| invalid(format!("raster.classes key {code:?} is not an integer code")))?;
            let class: SemanticClass = class.parse().map_err(|e: crate::landcover::LandCoverError| invalid(e.to_string()))?;
            map.insert(code, class);
        }
        Ok(map)
    }

    pub fn feature_options(&self) -> FeatureOptions {
        FeatureOptions {
            min_tree_pixels: self.features.min_tree_pixels,
            ..FeatureOptions::new(self.features.g)
        }
    }

    pub fn label_policy(&self) -> LabelPolicy {
        LabelPolicy {
            decay_step: self.labels.decay_step,
            positive_radius: self.labels.positive_radius,
            zero_radius: self.labels.zero_radius,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_frac: self.split.train,
            val_frac: self.split.val,
            test_frac: self.split.test,
            seed: self.seed,
        }
    }

    pub fn family(&self) -> Result<ModelFamily> {
        self.model.family.parse().map_err(|e: crate::models::ModelError| invalid(e.to_string()))
    }

    pub fn forest_params(&self) -> ForestParams {
        let f = &self.model.forest;
        ForestParams {
            n_trees: f.n_trees,
            tree: TreeParams {
                max_depth: f.max_depth,
                min_samples_leaf: f.min_samples_leaf,
                features_per_split: f.features_per_split,
            },
            bootstrap: f.bootstrap,
            seed: self.seed,
        }
    }

    pub fn kernel_ridge_params(&self) -> KernelRidgeParams {
        let k = &self.model.kernel_ridge;
        KernelRidgeParams {
            gamma: k.gamma,
            lambda: k.lambda,
            max_rows: k.max_rows,
            subsample: k.subsample,
            fit_intercept: k.fit_intercept,
            seed: self.seed,
        }
    }

    pub fn mlp_params(&self) -> MlpParams {
        let m = &self.model.mlp;
        MlpParams {
            hidden: m.hidden.clone(),
            learning_rate: m.learning_rate,
            max_iter: m.max_iter,
            patience: m.patience,
            seed: self.seed,
        }
    }

    /// The single parameter set used when grid search is off.
    pub fn param_point(&self) -> Result<ParamPoint> {
        Ok(match self.family()? {
            ModelFamily::RandomForest => ParamPoint::RandomForest(self.forest_params()),
            ModelFamily::KernelRidge => ParamPoint::KernelRidge(self.kernel_ridge_params()),
            ModelFamily::Mlp => ParamPoint::Mlp(self.mlp_params()),
        })
    }

    pub fn lattice(&self) -> Result<Lattice> {
        let g = &self.grid;
        Ok(match self.family()? {
            ModelFamily::RandomForest => Lattice::RandomForest {
                base: self.forest_params(),
                max_depth: g.forest_max_depth.clone(),
                n_trees: g.forest_n_trees.clone(),
            },
            ModelFamily::KernelRidge => Lattice::KernelRidge {
                base: self.kernel_ridge_params(),
                lambda: g.kernel_ridge_lambda.clone(),
            },
            ModelFamily::Mlp => Lattice::Mlp {
                base: self.mlp_params(),
                learning_rate: g.mlp_learning_rate.clone(),
                max_iter: g.mlp_max_iter.clone(),
            },
        })
    }

    /// Synthetic scenario parameters, seeded from the top-level seed.
    pub fn scenario(&self) -> ScenarioParams {
        ScenarioParams {
            seed: self.seed,
            ..self.synth.clone()
        }
    }
}
