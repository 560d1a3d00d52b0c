//! Repeated-resampling experiment harness: partition into proper training,
//! calibration, and validation sets; fit, calibrate, and measure empirical
//! coverage and interval width; aggregate means and standard deviations
//! across repetitions.
//!
//! Repetitions are independent given their derived seeds and run in
//! parallel (`RAYON_NUM_THREADS` bounds the pool); results are reduced in
//! repetition order, so reports are byte-identical regardless of thread
//! count.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{
    calibrate, predict_interval, split_three, IntervalMode, IntervalSpec, ResidualKind, SharedSpread,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{
    gbm_fit, glm_cv_select, spread_fit, GbmConfig, GbmModel, GlmCvConfig, MeanPredictor, Predictor, SpreadTarget,
};
use crate::numeric::derive_seed;
use crate::tweedie::{profile_power_select, PowerGrid};

/// Which learner produces the mean function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Glm,
    Gbm,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Glm => "glm",
            ModelKind::Gbm => "gbm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "glm" | "glmnet" => Ok(ModelKind::Glm),
            "gbm" | "lightgbm" => Ok(ModelKind::Gbm),
            other => Err(Error::config(format!("unknown model kind '{other}' (expected glm or gbm)"))),
        }
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Proper training set size.
    pub n1: usize,
    /// Calibration set size.
    pub n2: usize,
    /// Validation set size (coverage measurement).
    pub n3: usize,
    pub repetitions: usize,
    pub alpha: f64,
    pub mode: IntervalMode,
    pub kinds: Vec<ResidualKind>,
    pub models: Vec<ModelKind>,
    pub base_seed: u64,
    pub gbm: GbmConfig,
    pub power_grid: Vec<f64>,
    pub glm_gamma_grid: Vec<f64>,
    pub glm_n_lambda: usize,
    pub glm_folds: usize,
    /// Tune hyperparameters in the first repetition only and reuse them in
    /// the rest. Recorded in the report.
    pub fast_mode: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n1: 4000,
            n2: 4000,
            n3: 2296,
            repetitions: 100,
            alpha: 0.05,
            mode: IntervalMode::Symmetric,
            kinds: ResidualKind::ALL.to_vec(),
            models: vec![ModelKind::Gbm, ModelKind::Glm],
            base_seed: 0,
            gbm: GbmConfig::default(),
            power_grid: PowerGrid::default().values().to_vec(),
            glm_gamma_grid: (0..=10).map(|k| k as f64 / 10.0).collect(),
            glm_n_lambda: 100,
            glm_folds: 5,
            fast_mode: false,
        }
    }
}

impl ExperimentConfig {
    fn validate(&self, n_rows: usize) -> Result<()> {
        if self.n1 + self.n2 + self.n3 > n_rows {
            return Err(Error::parameter(format!(
                "partition sizes {}+{}+{} exceed the {} available rows",
                self.n1, self.n2, self.n3, n_rows
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::parameter("need at least one repetition"));
        }
        if self.n3 == 0 {
            return Err(Error::parameter("validation set must be non-empty"));
        }
        if self.kinds.is_empty() || self.models.is_empty() {
            return Err(Error::parameter("at least one residual kind and one model kind required"));
        }
        IntervalSpec::new(self.alpha, self.mode)?;
        PowerGrid::new(self.power_grid.clone())?;
        Ok(())
    }

    fn spec(&self) -> IntervalSpec {
        IntervalSpec {
            alpha: self.alpha,
            mode: self.mode,
        }
    }
}

/// Coverage and width of one (repetition, model, kind) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow {
    pub repetition: usize,
    pub model: ModelKind,
    pub kind: ResidualKind,
    /// Fraction of validation targets inside their intervals.
    pub coverage: f64,
    /// Mean width over finite intervals; `None` when every interval was
    /// infinite.
    pub mean_width: Option<f64>,
    pub infinite_intervals: usize,
}

/// Point-prediction quality of one (repetition, model) pair on the
/// validation set, plus the hyperparameters selected in that repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionModelMeta {
    pub repetition: usize,
    pub model: ModelKind,
    pub selected_power: f64,
    /// Dispersion MLE on the training set (GBM profile selection).
    pub dispersion: Option<f64>,
    pub glm_lambda: Option<f64>,
    pub glm_gamma: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub r2: Option<f64>,
}

/// Mean and SD over repetitions of one (model, kind) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: ModelKind,
    pub kind: ResidualKind,
    pub coverage_mean: f64,
    pub coverage_sd: f64,
    pub width_mean: Option<f64>,
    pub width_sd: Option<f64>,
    /// Total infinite-width intervals across repetitions (excluded from
    /// the width mean).
    pub infinite_intervals: usize,
    pub repetitions_used: usize,
}

/// Mean and SD of the point metrics per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsAggregate {
    pub model: ModelKind,
    pub rmse_mean: f64,
    pub rmse_sd: f64,
    pub mae_mean: f64,
    pub mae_sd: f64,
    pub r2_mean: Option<f64>,
    pub r2_sd: Option<f64>,
}

/// Everything the experiment produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub aggregates: Vec<AggregateRow>,
    pub metrics: Vec<MetricsAggregate>,
    pub repetition_rows: Vec<RepetitionRow>,
    pub repetition_meta: Vec<RepetitionModelMeta>,
    /// Failed repetitions with their causes; excluded from aggregates.
    pub failed_repetitions: Vec<(usize, String)>,
    /// (model, kind) pairs that were requested but not run.
    pub skipped_combinations: Vec<String>,
    /// Set when SDs are degenerate because only one repetition ran.
    pub single_repetition: bool,
    pub fast_mode: bool,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn aggregate(&self, model: ModelKind, kind: ResidualKind) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.model == model && a.kind == kind)
    }

    /// Per-repetition rows of one (model, kind) cell, ordered by repetition.
    pub fn rows_for(&self, model: ModelKind, kind: ResidualKind) -> Vec<&RepetitionRow> {
        self.repetition_rows
            .iter()
            .filter(|r| r.model == model && r.kind == kind)
            .collect()
    }
}

/// RMSE, MAE, and R^2 of mean predictions against observed targets.
///
/// `r2 = 1 - SSE/SST` with SST about the target mean; a zero-variance
/// target has no defined R^2 and yields `None`.
pub fn point_metrics(y: &[f64], mu_hat: &[f64]) -> Result<(f64, f64, Option<f64>)> {
    if y.len() != mu_hat.len() {
        return Err(Error::parameter(format!(
            "target and prediction lengths differ ({} vs {})",
            y.len(),
            mu_hat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::parameter("point metrics need at least 2 observations"));
    }
    let n = y.len() as f64;
    let mut sse = 0.0;
    let mut abs = 0.0;
    for (&yi, &mi) in y.iter().zip(mu_hat) {
        let d = yi - mi;
        sse += d * d;
        abs += d.abs();
    }
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|&yi| (yi - mean) * (yi - mean)).sum();
    let r2 = if sst > 0.0 { Some(1.0 - sse / sst) } else { None };
    Ok(((sse / n).sqrt(), abs / n, r2))
}

/// Hyperparameters chosen in the first repetition, reused under fast mode.
#[derive(Debug, Clone, Copy)]
struct SharedHyper {
    gbm_power: Option<f64>,
    glm: Option<(f64, f64, f64)>, // (power, gamma, lambda)
}

struct FittedModel {
    predictor: Predictor,
    meta: RepetitionModelMeta,
}

fn fit_gbm_for_rep(
    d1: &Dataset,
    cfg: &ExperimentConfig,
    rep: usize,
    shared: Option<&SharedHyper>,
) -> Result<(GbmModel, f64, Option<f64>)> {
    if let Some(p) = shared.and_then(|s| s.gbm_power) {
        let model = gbm_fit(d1, p, &cfg.gbm)?;
        return Ok((model, p, None));
    }
    let grid = PowerGrid::new(cfg.power_grid.clone())?;
    let selection = profile_power_select(d1, d1.target(), &grid, |ds, p| {
        let model = gbm_fit(ds, p, &cfg.gbm)?;
        let mu: Vec<f64> = (0..ds.n_rows())
            .map(|i| model.predict_mean(&ds.feature_row(i)))
            .collect::<Result<_>>()?;
        Ok((model, mu))
    })?;
    for (p, cause) in &selection.skipped {
        log::warn!("repetition {rep}: gbm power candidate {p} skipped: {cause}");
    }
    Ok((selection.model, selection.power, Some(selection.dispersion)))
}

fn fit_model_for_rep(
    model_kind: ModelKind,
    d1: &Dataset,
    d3: &Dataset,
    cfg: &ExperimentConfig,
    rep: usize,
    shared: Option<&SharedHyper>,
) -> Result<FittedModel> {
    let (predictor, selected_power, dispersion, glm_lambda, glm_gamma) = match model_kind {
        ModelKind::Gbm => {
            let (model, power, dispersion) = fit_gbm_for_rep(d1, cfg, rep, shared)?;
            (Predictor::Gbm(model), power, dispersion, None, None)
        }
        ModelKind::Glm => {
            if let Some((p, gamma, lambda)) = shared.and_then(|s| s.glm) {
                let model = crate::models::glm_fit(d1, p, lambda, gamma)?;
                (Predictor::Glm(model), p, None, Some(lambda), Some(gamma))
            } else {
                let cv = glm_cv_select(
                    d1,
                    &GlmCvConfig {
                        power_grid: PowerGrid::new(cfg.power_grid.clone())?,
                        gamma_grid: cfg.glm_gamma_grid.clone(),
                        lambda_path: None,
                        n_lambda: cfg.glm_n_lambda,
                        folds: cfg.glm_folds,
                        seed: derive_seed(cfg.base_seed, rep as u64),
                    },
                )?;
                (
                    Predictor::Glm(cv.model),
                    cv.power,
                    None,
                    Some(cv.lambda),
                    Some(cv.gamma),
                )
            }
        }
    };

    let mu3: Vec<f64> = (0..d3.n_rows())
        .map(|i| predictor.predict_mean(&d3.feature_row(i)))
        .collect::<Result<_>>()?;
    let (rmse, mae, r2) = point_metrics(d3.target(), &mu3)?;

    Ok(FittedModel {
        meta: RepetitionModelMeta {
            repetition: rep,
            model: model_kind,
            selected_power,
            dispersion,
            glm_lambda,
            glm_gamma,
            rmse,
            mae,
            r2,
        },
        predictor,
    })
}

struct RepOutcome {
    rows: Vec<RepetitionRow>,
    meta: Vec<RepetitionModelMeta>,
    skipped: Vec<String>,
}

fn run_repetition(ds: &Dataset, cfg: &ExperimentConfig, rep: usize, shared: Option<&SharedHyper>) -> Result<RepOutcome> {
    let seed = derive_seed(cfg.base_seed, rep as u64);
    let (i1, i2, i3) = split_three(ds.n_rows(), cfg.n1, cfg.n2, cfg.n3, seed)?;
    debug_assert!({
        let mut all: Vec<usize> = i1.iter().chain(&i2).chain(&i3).copied().collect();
        let before = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == before
    });
    let d1 = ds.subset(&i1)?;
    let d2 = ds.subset(&i2)?;
    let d3 = ds.subset(&i3)?;
    let spec = cfg.spec();

    let mut rows = Vec::new();
    let mut meta = Vec::new();
    let mut skipped = Vec::new();

    for &model_kind in &cfg.models {
        let fitted = fit_model_for_rep(model_kind, &d1, &d3, cfg, rep, shared)?;
        let predictor = &fitted.predictor;
        let p = predictor.power();

        // Spread models are tree ensembles fit to training-set residuals;
        // the paper pairs them with the boosted mean model only.
        let needs_pearson_spread =
            model_kind == ModelKind::Gbm && cfg.kinds.contains(&ResidualKind::LocallyWeightedPearson);
        let needs_abs_spread =
            model_kind == ModelKind::Gbm && cfg.kinds.contains(&ResidualKind::LeiLocallyWeighted);

        let mu1: Vec<f64> = (0..d1.n_rows())
            .map(|i| predictor.predict_mean(&d1.feature_row(i)))
            .collect::<Result<_>>()?;

        let pearson_spread: Option<SharedSpread> = if needs_pearson_spread {
            let residuals: Vec<f64> = d1
                .target()
                .iter()
                .zip(&mu1)
                .map(|(&y, &mu)| ((y - mu) / mu.powf(p / 2.0)).abs())
                .collect();
            Some(Arc::new(spread_fit(&d1, &residuals, &cfg.gbm, SpreadTarget::PearsonResidual)?))
        } else {
            None
        };
        let abs_spread: Option<SharedSpread> = if needs_abs_spread {
            let residuals: Vec<f64> = d1.target().iter().zip(&mu1).map(|(&y, &mu)| (y - mu).abs()).collect();
            Some(Arc::new(spread_fit(&d1, &residuals, &cfg.gbm, SpreadTarget::AbsoluteResidual)?))
        } else {
            None
        };

        for &kind in &cfg.kinds {
            if kind.requires_spread() && model_kind != ModelKind::Gbm {
                skipped.push(format!("{model_kind}/{kind}: spread-weighted kinds run with the gbm model only"));
                continue;
            }
            let spread = match kind {
                ResidualKind::LocallyWeightedPearson => pearson_spread.clone(),
                ResidualKind::LeiLocallyWeighted => abs_spread.clone(),
                _ => None,
            };
            let calib = calibrate(kind, predictor, spread, &d2, &spec)?;

            let mut covered = 0usize;
            let mut finite_width_sum = 0.0;
            let mut finite_count = 0usize;
            let mut infinite_count = 0usize;
            for i in 0..d3.n_rows() {
                let interval = predict_interval(&calib, predictor, &d3.feature_row(i), &spec)?;
                if interval.contains(d3.target()[i]) {
                    covered += 1;
                }
                if interval.is_infinite() {
                    infinite_count += 1;
                } else {
                    finite_width_sum += interval.width();
                    finite_count += 1;
                }
            }
            rows.push(RepetitionRow {
                repetition: rep,
                model: model_kind,
                kind,
                coverage: covered as f64 / d3.n_rows() as f64,
                mean_width: (finite_count > 0).then(|| finite_width_sum / finite_count as f64),
                infinite_intervals: infinite_count,
            });
        }
        meta.push(fitted.meta);
    }

    Ok(RepOutcome { rows, meta, skipped })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Run the full resampling experiment.
///
/// Each repetition derives its own seed from the base seed, partitions the
/// data into disjoint D1/D2/D3, fits every requested model on D1 with its
/// tuning recipe, calibrates every requested kind on D2, and measures
/// coverage and width on D3. Failures are recorded per repetition and
/// excluded from the aggregates.
pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate(ds.n_rows())?;

    // Under fast mode the first repetition tunes for everyone else.
    let mut outcomes: Vec<(usize, std::result::Result<RepOutcome, String>)> = Vec::new();
    let shared: Option<SharedHyper> = if cfg.fast_mode && cfg.repetitions > 1 {
        let first = run_repetition(ds, cfg, 0, None);
        let shared = first.as_ref().ok().map(|outcome| SharedHyper {
            gbm_power: outcome
                .meta
                .iter()
                .find(|m| m.model == ModelKind::Gbm)
                .map(|m| m.selected_power),
            glm: outcome.meta.iter().find(|m| m.model == ModelKind::Glm).and_then(|m| {
                Some((m.selected_power, m.glm_gamma?, m.glm_lambda?))
            }),
        });
        outcomes.push((0, first.map_err(|e| e.to_string())));
        shared
    } else {
        None
    };

    let start = outcomes.len();
    let rest: Vec<(usize, std::result::Result<RepOutcome, String>)> = (start..cfg.repetitions)
        .into_par_iter()
        .map(|rep| (rep, run_repetition(ds, cfg, rep, shared.as_ref()).map_err(|e| e.to_string())))
        .collect();
    outcomes.extend(rest);

    let mut repetition_rows = Vec::new();
    let mut repetition_meta = Vec::new();
    let mut failed_repetitions = Vec::new();
    let mut skipped_combinations: Vec<String> = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                repetition_rows.extend(o.rows);
                repetition_meta.extend(o.meta);
                for s in o.skipped {
                    if !skipped_combinations.contains(&s) {
                        skipped_combinations.push(s);
                    }
                }
            }
            Err(cause) => failed_repetitions.push((rep, cause)),
        }
    }

    if repetition_rows.is_empty() {
        return Err(Error::numeric(format!(
            "every repetition failed; first failure: {}",
            failed_repetitions
                .first()
                .map(|(_, c)| c.as_str())
                .unwrap_or("none")
        )));
    }

    let mut aggregates = Vec::new();
    for &model in &cfg.models {
        for &kind in &cfg.kinds {
            let rows: Vec<&RepetitionRow> = repetition_rows
                .iter()
                .filter(|r| r.model == model && r.kind == kind)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let coverages: Vec<f64> = rows.iter().map(|r| r.coverage).collect();
            let widths: Vec<f64> = rows.iter().filter_map(|r| r.mean_width).collect();
            let (coverage_mean, coverage_sd) = mean_sd(&coverages);
            let (width_mean, width_sd) = if widths.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_sd(&widths);
                (Some(m), Some(s))
            };
            aggregates.push(AggregateRow {
                model,
                kind,
                coverage_mean,
                coverage_sd,
                width_mean,
                width_sd,
                infinite_intervals: rows.iter().map(|r| r.infinite_intervals).sum(),
                repetitions_used: rows.len(),
            });
        }
    }

    let mut metrics = Vec::new();
    for &model in &cfg.models {
        let rows: Vec<&RepetitionModelMeta> = repetition_meta.iter().filter(|m| m.model == model).collect();
        if rows.is_empty() {
            continue;
        }
        let (rmse_mean, rmse_sd) = mean_sd(&rows.iter().map(|m| m.rmse).collect::<Vec<_>>());
        let (mae_mean, mae_sd) = mean_sd(&rows.iter().map(|m| m.mae).collect::<Vec<_>>());
        let r2s: Vec<f64> = rows.iter().filter_map(|m| m.r2).collect();
        let (r2_mean, r2_sd) = if r2s.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_sd(&r2s);
            (Some(m), Some(s))
        };
        metrics.push(MetricsAggregate {
            model,
            rmse_mean,
            rmse_sd,
            mae_mean,
            mae_sd,
            r2_mean,
            r2_sd,
        });
    }

    Ok(ExperimentReport {
        config: cfg.clone(),
        aggregates,
        metrics,
        repetition_rows,
        repetition_meta,
        failed_repetitions,
        skipped_combinations,
        single_repetition: cfg.repetitions == 1,
        fast_mode: cfg.fast_mode,
    })
}

/// Write the report as `{prefix}_report.json`, `{prefix}_aggregate.csv`,
/// and `{prefix}_repetitions.csv`.
pub fn write_report_files(report: &ExperimentReport, prefix: impl AsRef<Path>) -> Result<()> {
    let prefix = prefix.as_ref();
    let with_suffix = |suffix: &str| -> std::path::PathBuf {
        let mut name = prefix.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(suffix);
        prefix.with_file_name(name)
    };

    std::fs::write(with_suffix("_report.json"), report.to_json()?)?;

    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();

    let mut w = csv::Writer::from_path(with_suffix("_aggregate.csv"))?;
    w.write_record([
        "model",
        "kind",
        "mode",
        "coverage_mean",
        "coverage_sd",
        "width_mean",
        "width_sd",
        "infinite_intervals",
        "repetitions_used",
    ])?;
    for row in &report.aggregates {
        w.write_record([
            row.model.to_string(),
            row.kind.to_string(),
            report.config.mode.to_string(),
            row.coverage_mean.to_string(),
            row.coverage_sd.to_string(),
            fmt_opt(row.width_mean),
            fmt_opt(row.width_sd),
            row.infinite_intervals.to_string(),
            row.repetitions_used.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(with_suffix("_repetitions.csv"))?;
    w.write_record([
        "repetition",
        "model",
        "kind",
        "coverage",
        "mean_width",
        "infinite_intervals",
        "selected_power",
        "glm_lambda",
        "glm_gamma",
        "rmse",
        "mae",
        "r2",
    ])?;
    for row in &report.repetition_rows {
        let meta = report
            .repetition_meta
            .iter()
            .find(|m| m.repetition == row.repetition && m.model == row.model);
        w.write_record([
            row.repetition.to_string(),
            row.model.to_string(),
            row.kind.to_string(),
            row.coverage.to_string(),
            fmt_opt(row.mean_width),
            row.infinite_intervals.to_string(),
            meta.map(|m| m.selected_power.to_string()).unwrap_or_default(),
            meta.map(|m| fmt_opt(m.glm_lambda)).unwrap_or_default(),
            meta.map(|m| fmt_opt(m.glm_gamma)).unwrap_or_default(),
            meta.map(|m| m.rmse.to_string()).unwrap_or_default(),
            meta.map(|m| m.mae.to_string()).unwrap_or_default(),
            meta.map(|m| fmt_opt(m.r2)).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
