//! Covariance estimation and denoising: generative covariance models,
//! random-matrix shrinkage, hierarchical filtering, a residual
//! convolutional denoiser, Monte Carlo loss evaluation and long-only
//! minimum-variance walk-forward backtests.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod cli;
pub mod covariance;
pub mod data;
pub mod denoiser;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod fsutil;
pub mod models;
pub mod portfolio;
pub mod rng;
pub mod spectral;

pub use covariance::{CovarianceMatrix, Provenance};
pub use error::{Error, Result};
pub use estimators::EstimatorId;
pub use models::{ModelKind, ModelSpec};
