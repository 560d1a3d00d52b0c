//! Distribution-free prediction intervals for nonnegative, zero-inflated
//! regression targets, built on split conformal calibration with
//! Tweedie-model-derived non-conformity scores.
//!
//! The crate has five building blocks:
//!
//! - [`tweedie`] — compound Poisson-Gamma mathematics: density, deviance,
//!   dispersion estimation, power selection, exact sampling.
//! - [`data`] — CSV ingestion with a declared schema, feature encoding,
//!   and synthetic data generation for self-verification.
//! - [`models`] — mean-function learners behind one predictor interface:
//!   an elastic-net Tweedie GLM and gradient-boosted trees with Tweedie
//!   loss, plus a squared-error spread model for local weighting.
//! - [`conformal`] — non-conformity scores on a calibration set, conformal
//!   quantiles, and exact interval inversion for every residual type.
//! - [`evaluation`] — a repeated-resampling harness measuring empirical
//!   coverage and interval width.
//!
//! Intervals carry the usual split conformal guarantee: if the calibration
//! scores are exchangeable with the test score, coverage is at least
//! `1 - alpha` regardless of how good the fitted mean function is.

pub mod conformal;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod numeric;
pub mod tweedie;

pub use error::{Error, Result};
