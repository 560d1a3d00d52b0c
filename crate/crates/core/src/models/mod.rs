//! Mean-function learners behind a uniform predictor interface.
//!
//! Two in-repo learners produce strictly positive mean predictions through
//! a log link: an elastic-net Tweedie GLM ([`glm`]) and gradient-boosted
//! trees with Tweedie loss ([`gbm`]). A squared-error tree ensemble
//! ([`SpreadModel`]) estimates the residual spread for locally weighted
//! intervals. Fitted models are immutable and safe to share across threads.

mod gbm;
mod glm;
mod loss;
mod tree;

pub use gbm::{
    feature_importance, gbm_cv_rounds, gbm_fit, spread_fit, FeatureImportance, GbmConfig, GbmModel, SpreadModel,
    SpreadTarget,
};
pub use glm::{glm_cv_select, glm_fit, glm_kkt_residual, glm_lambda_max, GlmCvConfig, GlmCvResult, GlmModel};
pub use loss::{tweedie_loss, tweedie_loss_grad_hess, Objective, SCORE_CLAMP};
pub use tree::{ImportanceAccumulators, Node, SplitCondition, Tree, TreeEnsemble, MISSING_ONLY_THRESHOLD};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMeta, FeatureValue, SynthOracle};
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, rng_from_seed};
use rand::seq::SliceRandom;

/// Which rows a model was fitted on, recorded at construction time so the
/// conformal layer can reject calibration data that overlaps the training
/// data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainProvenance {
    pub dataset_id: u64,
    /// Sorted row identities within that dataset.
    pub rows: Vec<u32>,
}

impl TrainProvenance {
    pub fn of(ds: &Dataset) -> Self {
        let mut rows = ds.row_ids().to_vec();
        rows.sort_unstable();
        Self {
            dataset_id: ds.source_id(),
            rows,
        }
    }

    /// True when `other` draws any row this model was trained on.
    pub fn overlaps(&self, other: &Dataset) -> bool {
        self.dataset_id == other.source_id()
            && other.row_ids().iter().any(|r| self.rows.binary_search(r).is_ok())
    }
}

/// Anything that maps a feature row to a strictly positive mean estimate.
pub trait MeanPredictor {
    fn predict_mean(&self, row: &[FeatureValue<'_>]) -> Result<f64>;

    /// Tweedie power in effect for residual formulas.
    fn power(&self) -> f64;

    /// Training provenance, when known. `None` opts out of overlap checks
    /// (e.g. oracles that never saw data).
    fn provenance(&self) -> Option<&TrainProvenance> {
        None
    }
}

/// Covariate-dependent spread estimate for locally weighted residuals.
pub trait SpreadPredictor {
    fn predict_spread(&self, row: &[FeatureValue<'_>]) -> Result<f64>;

    fn provenance(&self) -> Option<&TrainProvenance> {
        None
    }
}

impl MeanPredictor for SynthOracle {
    fn predict_mean(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        self.true_mean(row)
    }

    fn power(&self) -> f64 {
        SynthOracle::power(self)
    }
}

/// A fitted mean-function model of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Predictor {
    Glm(GlmModel),
    Gbm(GbmModel),
}

impl Predictor {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Predictor::Glm(_) => "glm",
            Predictor::Gbm(_) => "gbm",
        }
    }

    pub fn features(&self) -> &[FeatureMeta] {
        match self {
            Predictor::Glm(m) => &m.encoding.features,
            Predictor::Gbm(m) => &m.ensemble.features,
        }
    }

    /// Check that a dataset's features line up with the training schema.
    pub fn validate_features(&self, features: &[FeatureMeta]) -> Result<()> {
        let expected = self.features();
        if features.len() != expected.len() {
            return Err(Error::data(format!(
                "dataset has {} features but the model was trained on {}",
                features.len(),
                expected.len()
            )));
        }
        for (got, want) in features.iter().zip(expected) {
            if got.name != want.name {
                return Err(Error::data(format!(
                    "feature name mismatch: dataset has '{}' where the model expects '{}'",
                    got.name, want.name
                )));
            }
            let kind_matches = matches!(
                (&got.kind, &want.kind),
                (crate::data::FeatureKind::Numeric, crate::data::FeatureKind::Numeric)
                    | (
                        crate::data::FeatureKind::Categorical { .. },
                        crate::data::FeatureKind::Categorical { .. }
                    )
            );
            if !kind_matches {
                return Err(Error::data(format!(
                    "feature '{}' kind mismatch between dataset and model",
                    got.name
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl MeanPredictor for Predictor {
    fn predict_mean(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        match self {
            Predictor::Glm(m) => m.predict_mean(row),
            Predictor::Gbm(m) => m.predict_mean(row),
        }
    }

    fn power(&self) -> f64 {
        match self {
            Predictor::Glm(m) => m.power,
            Predictor::Gbm(m) => m.power,
        }
    }

    fn provenance(&self) -> Option<&TrainProvenance> {
        match self {
            Predictor::Glm(m) => m.provenance.as_ref(),
            Predictor::Gbm(m) => m.provenance.as_ref(),
        }
    }
}

impl SpreadModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Deterministic fold assignment: shuffled round-robin, a function of
/// `(n, folds, seed)` only. Returns the validation indices per fold.
pub(crate) fn cv_folds(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, 0xF01D)));
    let mut out = vec![Vec::with_capacity(n / folds + 1); folds];
    for (pos, &i) in order.iter().enumerate() {
        out[pos % folds].push(i);
    }
    out
}
