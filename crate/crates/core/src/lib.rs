//! Poaching-hotspot mapping.
//!
//! The pipeline turns a classified land-cover raster and a set of past
//! incident locations into a per-cell probability heatmap:
//!
//! 1. [`landcover`] parses and validates the class raster `G`.
//! 2. [`features`] aggregates `g x g` pixel windows into the feature grid `V`
//!    of `(a_h, a_t, a_g, d_f, d_w)` vectors, using the kernels in [`geometry`].
//! 3. [`labeling`] turns incident cells into distance-decayed regression labels.
//! 4. [`dataset`] splits and standardizes the labeled rows.
//! 5. [`models`] fits a random forest, kernel ridge or MLP regressor.
//! 6. [`evaluation`] scores models and measures permutation importance.
//! 7. [`heatmap`] evaluates the model on every cell of `V`.
//!
//! [`synth`] generates scenarios with a known ground truth, and [`app`]
//! wires the stages together behind the command-line interface.

pub mod app;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod heatmap;
pub mod labeling;
pub mod landcover;
pub mod models;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use features::{FeatureGrid, FeatureVector, FEATURE_NAMES, N_FEATURES};
pub use landcover::{ClassMap, GeoTransform, LandCoverGrid, SemanticClass};
