//! Survival prognosis toolkit: censored tabular cohorts, deep multi-task
//! logistic regression, proportional-hazards and logistic baselines, the
//! volume-gated fuzzy mixture, prediction ensembling and a challenge-style
//! scoring harness (AUROC, average precision, concordance with stratified
//! bootstrap intervals, permutation tests and FDR control).
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the `f64` instantiations used by the command-line tool.

// `!(x > 0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classic_models;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model_file;
pub mod mtlr;
pub mod optim;
pub mod pipeline;
pub mod predictions;
pub mod scalar;
pub mod survival_np;

pub use error::{Result, SurvError};
pub use scalar::Scalar;

pub type Mtlr = mtlr::MtlrModel<f64>;
pub type Cox = survival_np::CoxModel<f64>;
pub type Logistic = classic_models::LogisticModel<f64>;
pub type Fuzzy = classic_models::FuzzyModel<f64>;
pub type Baseline = classic_models::BaselineModel<f64>;
pub type Predictions = predictions::PredictionSet<f64>;
pub type Outcomes = predictions::Truth<f64>;
pub type Matrix = data::EncodedMatrix<f64>;
pub type KaplanMeier = survival_np::KaplanMeierCurve<f64>;
pub type Report = metrics::EvalReport<f64>;
pub type SavedModel = model_file::ModelFile<f64>;
