//! Tools for judging whether a language model is a good zero-shot predictor
//! on a tabular dataset, before and without trusting its labels.
//!
//! Rows are serialized into multiple-choice prompts, the model's first-token
//! log-probabilities are turned into risk scores, and the scores are
//! summarized both against labels (AUC, calibration) and without them
//! (score spread, confidence, proxy tasks built by masking columns). A
//! boosted-tree regressor trained on risk-score percentiles then predicts
//! task-level AUC for unlabeled tasks.
//!
//! Numeric routines are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, which the pipeline uses throughout.

pub mod boost;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod report;
pub mod scalar;
pub mod scoring;
pub mod stats;
pub mod suitability;
pub mod tasks;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BoostedModel = boost::BoostedModel<f64>;
pub type TreeNode = boost::TreeNode<f64>;
pub type CalibrationCurve = metrics::CalibrationCurve<f64>;
pub type CalibrationBin = metrics::CalibrationBin<f64>;
pub type PercentileFeatures = suitability::PercentileFeatures<f64>;
pub type FeatureRow = suitability::FeatureRow<f64>;
pub type SweepCurve = suitability::SweepCurve<f64>;
pub type CorrelationReport = suitability::CorrelationReport<f64>;
