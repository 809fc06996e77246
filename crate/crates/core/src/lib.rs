//! Zero anaphora resolution toolkit.
//!
//! The crate covers the whole experimental pipeline for predicate-argument
//! analysis with masked-language-model data augmentation:
//!
//! * [`corpus`]: annotated sentences, the `.zar.tsv` format and gold label grids.
//! * [`synthgen`]: a seeded generator of synthetic pro-drop corpora.
//! * [`augment`]: Bernoulli and POS-controlled masking plus training-stream mixing.
//! * [`lm_backend`]: pluggable masked language models (mock, desk-scale, external).
//! * [`zar_model`]: the residual alternating-direction GRU argument scorer.
//! * [`train_eval`]: training, threshold tuning, evaluation and significance testing.
//!
//! Numeric code in [`zar_model`] and [`train_eval`] is generic over
//! [`Scalar`]; the aliases below fix the precision for common uses.

pub mod augment;
pub mod config;
pub mod corpus;
pub mod error;
pub mod lm_backend;
pub mod rng;
pub mod scalar;
pub mod synthgen;
pub mod train_eval;
pub mod zar_model;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision analyzer (used for gradient checks and checkpoints).
pub type ZarModel = zar_model::ZarModel<f64>;
/// Single-precision analyzer.
pub type ZarModelF32 = zar_model::ZarModel<f32>;
/// Double-precision score grid.
pub type ScoreGrid = zar_model::ScoreGrid<f64>;
/// Double-precision encoder features.
pub type FeatureSequence = zar_model::FeatureSequence<f64>;
/// Double-precision trainer output.
pub type TrainOutcome = train_eval::TrainOutcome<f64>;
