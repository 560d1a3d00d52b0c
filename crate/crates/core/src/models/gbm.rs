//! Gradient-boosted trees with Tweedie loss, plus the squared-error spread
//! ensembles used for locally weighted residuals.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureValue};
use crate::error::{Error, Result};
use crate::models::loss::Objective;
use crate::models::tree::{fit_ensemble, ImportanceAccumulators, TreeEnsemble};
use crate::models::{MeanPredictor, SpreadPredictor, TrainProvenance};
use crate::numeric::{derive_seed, rng_from_seed};
use crate::tweedie::unit_deviance;
use rand::seq::SliceRandom;

/// Boosting configuration. Defaults: 10 leaves, learning rate 0.005, up to
/// 2000 rounds, 255 histogram bins, leaf L2 smoothing 1.0, and at least 20
/// rows per leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub max_leaves: usize,
    pub learning_rate: f64,
    pub num_rounds: usize,
    pub min_leaf_count: usize,
    pub leaf_l2: f64,
    pub bins: usize,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            max_leaves: 10,
            learning_rate: 0.005,
            num_rounds: 2000,
            min_leaf_count: 20,
            leaf_l2: 1.0,
            bins: 255,
        }
    }
}

/// Boosted-tree mean model on a log link: `mu(x) = exp(score(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub ensemble: TreeEnsemble,
    pub power: f64,
    pub importance: ImportanceAccumulators,
    /// Mean training loss after each round.
    pub loss_curve: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<TrainProvenance>,
}

impl GbmModel {
    pub fn n_trees(&self) -> usize {
        self.ensemble.trees.len()
    }

    /// Raw boosted score (log mean).
    pub fn score(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        self.ensemble.score_row(row)
    }
}

impl MeanPredictor for GbmModel {
    fn predict_mean(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        Ok(Objective::Tweedie { power: self.power }.mean(self.score(row)?))
    }

    fn power(&self) -> f64 {
        self.power
    }

    fn provenance(&self) -> Option<&TrainProvenance> {
        self.provenance.as_ref()
    }
}

/// Fit a Tweedie-loss boosted tree model on the dataset's target.
pub fn gbm_fit(train: &Dataset, p: f64, config: &GbmConfig) -> Result<GbmModel> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::parameter(format!("power must lie in (1, 2), got {p}")));
    }
    let (ensemble, importance, loss_curve) = fit_ensemble(
        train,
        train.target(),
        Objective::Tweedie { power: p },
        config.max_leaves,
        config.learning_rate,
        config.num_rounds,
        config.min_leaf_count,
        config.leaf_l2,
        config.bins,
    )?;
    Ok(GbmModel {
        ensemble,
        power: p,
        importance,
        loss_curve,
        provenance: Some(TrainProvenance::of(train)),
    })
}

/// Pick the boosting round count by five-fold cross-validated deviance.
///
/// Folds are a deterministic function of `(seed, n)`. Returns the round
/// count minimizing the mean held-out Tweedie deviance and that deviance.
pub fn gbm_cv_rounds(train: &Dataset, p: f64, config: &GbmConfig, folds: usize, seed: u64) -> Result<(usize, f64)> {
    if folds < 2 {
        return Err(Error::parameter(format!("need at least 2 folds, got {folds}")));
    }
    if train.n_rows() < folds {
        return Err(Error::data(format!(
            "{} rows cannot be split into {folds} folds",
            train.n_rows()
        )));
    }
    let n = train.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, 0xF01D)));

    // deviance_by_round[r] = summed held-out deviance using r+1 trees.
    let mut deviance_by_round = vec![0.0; config.num_rounds];
    let mut max_rounds_seen = config.num_rounds;

    for fold in 0..folds {
        let val_idx: Vec<usize> = order.iter().copied().skip(fold).step_by(folds).collect();
        let train_idx: Vec<usize> = order
            .iter()
            .copied()
            .enumerate()
            .filter(|(pos, _)| pos % folds != fold)
            .map(|(_, i)| i)
            .collect();
        let fold_train = train.subset(&train_idx)?;
        let fold_val = train.subset(&val_idx)?;
        let model = gbm_fit(&fold_train, p, config)?;
        max_rounds_seen = max_rounds_seen.min(model.n_trees().max(1));

        // Accumulate per-round scores for the held-out rows.
        for i in 0..fold_val.n_rows() {
            let row = fold_val.feature_row(i);
            let y = fold_val.target()[i];
            let mut score = model.ensemble.base_score;
            for (r, tree) in model.ensemble.trees.iter().enumerate() {
                score += model.ensemble.learning_rate * model.ensemble.route(tree, &row)?;
                if r < config.num_rounds {
                    let mu = Objective::Tweedie { power: p }.mean(score);
                    deviance_by_round[r] += unit_deviance(y, mu, p)?;
                }
            }
            // A fold stopping early keeps its last score for later rounds.
            for r in model.ensemble.trees.len()..config.num_rounds {
                let mu = Objective::Tweedie { power: p }.mean(score);
                deviance_by_round[r] += unit_deviance(y, mu, p)?;
            }
        }
    }

    let (best_round, best_dev) = deviance_by_round
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or_else(|| Error::numeric("no boosting rounds evaluated"))?;
    Ok((best_round + 1, best_dev / n as f64))
}

/// Spread model target: which residual the ensemble was fit to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadTarget {
    /// Absolute Pearson residuals (locally weighted Pearson intervals).
    PearsonResidual,
    /// Absolute raw residuals `|y - mu|` (locally weighted raw intervals).
    AbsoluteResidual,
}

/// Squared-error tree ensemble over nonnegative residuals, clamped below
/// by a small positive floor so weighted scores stay well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadModel {
    pub ensemble: TreeEnsemble,
    pub floor: f64,
    pub target: SpreadTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<TrainProvenance>,
}

impl SpreadPredictor for SpreadModel {
    fn predict_spread(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        Ok(self.ensemble.score_row(row)?.max(self.floor))
    }

    fn provenance(&self) -> Option<&TrainProvenance> {
        self.provenance.as_ref()
    }
}

/// Fit the error-spread model: squared-error trees regressing nonnegative
/// residuals on the features of `train` (its own target column is ignored).
pub fn spread_fit(
    train: &Dataset,
    residuals: &[f64],
    config: &GbmConfig,
    target: SpreadTarget,
) -> Result<SpreadModel> {
    if residuals.len() != train.n_rows() {
        return Err(Error::data(format!(
            "{} residuals for {} rows",
            residuals.len(),
            train.n_rows()
        )));
    }
    for &r in residuals {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::data(format!("residual {r} is not a nonnegative finite value")));
        }
    }
    let (ensemble, _, _) = fit_ensemble(
        train,
        residuals,
        Objective::SquaredError,
        config.max_leaves,
        config.learning_rate,
        config.num_rounds,
        config.min_leaf_count,
        config.leaf_l2,
        config.bins,
    )?;
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    Ok(SpreadModel {
        ensemble,
        floor: (1e-3 * mean).max(1e-6),
        target,
        provenance: Some(TrainProvenance::of(train)),
    })
}

/// Normalized per-feature importance shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub names: Vec<String>,
    /// Share of total split gain attributed to each feature.
    pub gain: Vec<f64>,
    /// Share of rows reached by each feature's splits.
    pub cover: Vec<f64>,
    /// Share of split count per feature.
    pub frequency: Vec<f64>,
}

impl FeatureImportance {
    /// Feature indices sorted by descending gain share.
    pub fn order_by_gain(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.names.len()).collect();
        idx.sort_by(|&a, &b| self.gain[b].partial_cmp(&self.gain[a]).unwrap_or(std::cmp::Ordering::Equal));
        idx
    }
}

/// Gain/cover/frequency shares of a fitted boosted-tree model. Each column
/// sums to one when the model contains at least one split; a model with no
/// splits yields an all-zero table.
pub fn feature_importance(model: &GbmModel) -> FeatureImportance {
    let acc = &model.importance;
    let names = model.ensemble.features.iter().map(|f| f.name.clone()).collect();
    let normalize = |values: Vec<f64>| -> Vec<f64> {
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            values.iter().map(|v| v / total).collect()
        } else {
            values
        }
    };
    FeatureImportance {
        names,
        gain: normalize(acc.gain.clone()),
        cover: normalize(acc.cover.clone()),
        frequency: normalize(acc.frequency.iter().map(|&f| f as f64).collect()),
    }
}
