//! Split conformal calibration: non-conformity scores, conformal
//! quantiles, and exact interval inversion.
//!
//! Calibration scores are computed on a held-out set disjoint from the
//! training rows (enforced through model provenance), sorted, and inverted
//! into intervals `{y >= 0 : score(y) <= q}` where `q` is the
//! `ceil((n2+1)(1-alpha))`-th smallest calibration score. Every supported
//! score is unimodal in `y` with its minimum at the predicted mean, so the
//! inverse is always a single interval; the deviance score has no closed
//! form and is inverted by bisection.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureValue};
use crate::error::{Error, Result};
use crate::models::{MeanPredictor, SpreadPredictor};
use crate::numeric::{bisect, derive_seed, rng_from_seed};
use crate::tweedie::unit_deviance;
use rand::seq::SliceRandom;

/// Residual family used as the non-conformity score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// `(y - mu) / mu^(p/2)`; the constant dispersion cancels.
    Pearson,
    /// Signed square root of the Tweedie unit deviance.
    Deviance,
    /// `(y^(1-p/3) - mu^(1-p/3)) / mu^(p/6)`; the constant `3/(3-p)` cancels.
    Anscombe,
    /// Raw residual `y - mu`.
    Unstandardized,
    /// Pearson residual divided by a fitted spread `rho(x)`.
    LocallyWeightedPearson,
    /// Raw residual divided by a fitted conditional MAD estimate `sigma(x)`.
    LeiLocallyWeighted,
}

impl ResidualKind {
    pub const ALL: [ResidualKind; 6] = [
        ResidualKind::Pearson,
        ResidualKind::Deviance,
        ResidualKind::Anscombe,
        ResidualKind::Unstandardized,
        ResidualKind::LocallyWeightedPearson,
        ResidualKind::LeiLocallyWeighted,
    ];

    /// Whether this kind divides by a covariate-dependent spread estimate.
    pub fn requires_spread(&self) -> bool {
        matches!(self, ResidualKind::LocallyWeightedPearson | ResidualKind::LeiLocallyWeighted)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ResidualKind::Pearson => "pearson",
            ResidualKind::Deviance => "deviance",
            ResidualKind::Anscombe => "anscombe",
            ResidualKind::Unstandardized => "unstandardized",
            ResidualKind::LocallyWeightedPearson => "locally_weighted_pearson",
            ResidualKind::LeiLocallyWeighted => "lei_locally_weighted",
        }
    }
}

impl fmt::Display for ResidualKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResidualKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pearson" => Ok(ResidualKind::Pearson),
            "deviance" => Ok(ResidualKind::Deviance),
            "anscombe" => Ok(ResidualKind::Anscombe),
            "unstandardized" | "raw" => Ok(ResidualKind::Unstandardized),
            "locally_weighted_pearson" | "lw_pearson" => Ok(ResidualKind::LocallyWeightedPearson),
            "lei_locally_weighted" | "lei" => Ok(ResidualKind::LeiLocallyWeighted),
            other => Err(Error::config(format!(
                "unknown residual kind '{other}' (expected one of: pearson, deviance, anscombe, \
                 unstandardized, locally_weighted_pearson, lei_locally_weighted)"
            ))),
        }
    }
}

/// Symmetric intervals use one quantile of absolute scores; asymmetric
/// intervals use two quantiles of the signed raw scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    Symmetric,
    Asymmetric,
}

impl fmt::Display for IntervalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntervalMode::Symmetric => "symmetric",
            IntervalMode::Asymmetric => "asymmetric",
        })
    }
}

impl FromStr for IntervalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "symmetric" => Ok(IntervalMode::Symmetric),
            "asymmetric" => Ok(IntervalMode::Asymmetric),
            other => Err(Error::config(format!("unknown interval mode '{other}'"))),
        }
    }
}

/// Miscoverage level and interval mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub alpha: f64,
    pub mode: IntervalMode,
}

impl IntervalSpec {
    pub fn new(alpha: f64, mode: IntervalMode) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
            return Err(Error::parameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { alpha, mode })
    }

    pub fn symmetric(alpha: f64) -> Result<Self> {
        Self::new(alpha, IntervalMode::Symmetric)
    }
}

/// A prediction interval `[lo, hi]` with `0 <= lo <= hi`; `hi` may be
/// infinite when the calibration set is too small for the target coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lo: f64,
    pub hi: f64,
}

impl PredictionInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && lo <= hi) && !(lo == 0.0 && hi == 0.0) {
            return Err(Error::numeric(format!("malformed interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_infinite(&self) -> bool {
        self.hi.is_infinite()
    }
}

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

fn check_score_inputs(y: f64, mu: f64, p: f64, kind: ResidualKind, spread: Option<f64>) -> Result<f64> {
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::parameter(format!("y must be nonnegative and finite, got {y}")));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::parameter(format!("predicted mean must be positive, got {mu}")));
    }
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::parameter(format!("power must lie in (1, 2), got {p}")));
    }
    if kind.requires_spread() {
        match spread {
            Some(s) if s.is_finite() && s > 0.0 => Ok(s),
            Some(s) => Err(Error::parameter(format!("spread must be positive, got {s}"))),
            None => Err(Error::config(format!(
                "residual kind '{kind}' requires a spread model"
            ))),
        }
    } else {
        Ok(1.0)
    }
}

/// Signed (raw) non-conformity score; negative below the predicted mean.
pub fn signed_score(kind: ResidualKind, y: f64, mu: f64, p: f64, spread: Option<f64>) -> Result<f64> {
    let rho = check_score_inputs(y, mu, p, kind, spread)?;
    let value = match kind {
        ResidualKind::Pearson => (y - mu) / mu.powf(p / 2.0),
        ResidualKind::Deviance => (y - mu).signum() * unit_deviance(y, mu, p)?.sqrt(),
        ResidualKind::Anscombe => {
            let e = 1.0 - p / 3.0;
            (y.powf(e) - mu.powf(e)) / mu.powf(p / 6.0)
        }
        ResidualKind::Unstandardized => y - mu,
        ResidualKind::LocallyWeightedPearson => (y - mu) / mu.powf(p / 2.0) / rho,
        ResidualKind::LeiLocallyWeighted => (y - mu) / rho,
    };
    Ok(value)
}

/// Non-conformity score in the given mode: absolute for symmetric
/// intervals, signed for asymmetric intervals.
pub fn score(
    kind: ResidualKind,
    y: f64,
    mu: f64,
    p: f64,
    spread: Option<f64>,
    mode: IntervalMode,
) -> Result<f64> {
    let raw = signed_score(kind, y, mu, p, spread)?;
    Ok(match mode {
        IntervalMode::Symmetric => raw.abs(),
        IntervalMode::Asymmetric => raw,
    })
}

// ---------------------------------------------------------------------------
// Splitting and quantiles
// ---------------------------------------------------------------------------

/// Disjoint uniformly random index sets of sizes `n1` and `n2` out of
/// `0..n`, deterministic in the seed.
pub fn split_indices(n: usize, n1: usize, n2: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let (d1, d2, _) = split_three(n, n1, n2, 0, seed)?;
    Ok((d1, d2))
}

/// Disjoint random index sets of sizes `n1`, `n2`, `n3` out of `0..n`.
pub fn split_three(
    n: usize,
    n1: usize,
    n2: usize,
    n3: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if n1 + n2 + n3 > n {
        return Err(Error::parameter(format!(
            "partition sizes {n1}+{n2}+{n3} exceed {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, 0x5917)));
    let d1 = order[..n1].to_vec();
    let d2 = order[n1..n1 + n2].to_vec();
    let d3 = order[n1 + n2..n1 + n2 + n3].to_vec();
    Ok((d1, d2, d3))
}

/// Nudge compensating float noise in `(n+1)*(1-alpha)` so the index matches
/// exact rational arithmetic.
const INDEX_EPS: f64 = 1e-9;

/// 1-based conformal order-statistic index `k = ceil((n2+1)(1-alpha))`.
pub fn conformal_rank(n2: usize, alpha: f64) -> usize {
    ((n2 as f64 + 1.0) * (1.0 - alpha) - INDEX_EPS).ceil().max(1.0) as usize
}

fn quantile_from_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let k = conformal_rank(sorted.len(), alpha);
    if k > sorted.len() {
        f64::INFINITY
    } else {
        sorted[k - 1]
    }
}

fn asymmetric_from_sorted(sorted: &[f64], alpha: f64) -> (f64, f64) {
    let n2 = sorted.len();
    let k_lo = ((n2 as f64 + 1.0) * (alpha / 2.0) + INDEX_EPS).floor() as usize;
    let k_hi = ((n2 as f64 + 1.0) * (1.0 - alpha / 2.0) - INDEX_EPS).ceil().max(1.0) as usize;
    let q_lo = if k_lo == 0 { f64::NEG_INFINITY } else { sorted[k_lo - 1] };
    let q_hi = if k_hi > n2 { f64::INFINITY } else { sorted[k_hi - 1] };
    (q_lo, q_hi)
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Shared handle to a fitted spread model (or a test oracle).
pub type SharedSpread = Arc<dyn SpreadPredictor + Send + Sync>;

/// Ordered non-conformity scores from the calibration set, together with
/// everything interval inversion needs later.
#[derive(Clone)]
pub struct CalibrationScores {
    kind: ResidualKind,
    mode: IntervalMode,
    power: f64,
    /// Sorted ascending; absolute in symmetric mode, signed in asymmetric.
    scores: Vec<f64>,
    spread: Option<SharedSpread>,
}

impl fmt::Debug for CalibrationScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CalibrationScores")
            .field("kind", &self.kind)
            .field("mode", &self.mode)
            .field("power", &self.power)
            .field("n2", &self.scores.len())
            .field("has_spread", &self.spread.is_some())
            .finish()
    }
}

impl CalibrationScores {
    /// Wrap pre-computed scores. They are sorted internally; symmetric-mode
    /// scores must be nonnegative.
    pub fn from_scores(
        kind: ResidualKind,
        mode: IntervalMode,
        power: f64,
        mut scores: Vec<f64>,
        spread: Option<SharedSpread>,
    ) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::parameter("calibration requires at least one score"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::numeric("calibration scores contain non-finite values"));
        }
        if mode == IntervalMode::Symmetric && scores.iter().any(|&s| s < 0.0) {
            return Err(Error::parameter("symmetric-mode scores must be nonnegative"));
        }
        if kind.requires_spread() && spread.is_none() {
            return Err(Error::config(format!("residual kind '{kind}' requires a spread model")));
        }
        if !(power > 1.0 && power < 2.0) {
            return Err(Error::parameter(format!("power must lie in (1, 2), got {power}")));
        }
        scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        Ok(Self {
            kind,
            mode,
            power,
            scores,
            spread,
        })
    }

    pub fn kind(&self) -> ResidualKind {
        self.kind
    }

    pub fn mode(&self) -> IntervalMode {
        self.mode
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn n2(&self) -> usize {
        self.scores.len()
    }

    /// Sorted calibration scores.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Conformal quantile for symmetric mode: the `k`-th smallest score
    /// with `k = ceil((n2+1)(1-alpha))`, or `+inf` when `k > n2`.
    pub fn conformal_quantile(&self, alpha: f64) -> Result<f64> {
        if self.mode != IntervalMode::Symmetric {
            return Err(Error::config("conformal_quantile applies to symmetric mode"));
        }
        Ok(quantile_from_sorted(&self.scores, alpha))
    }

    /// Lower/upper raw-score quantiles for asymmetric mode: the
    /// `floor((alpha/2)(n2+1))`-th and `ceil((1-alpha/2)(n2+1))`-th order
    /// statistics, with `-inf`/`+inf` sentinels when out of range.
    pub fn asymmetric_quantiles(&self, alpha: f64) -> Result<(f64, f64)> {
        if self.mode != IntervalMode::Asymmetric {
            return Err(Error::config("asymmetric_quantiles applies to asymmetric mode"));
        }
        Ok(asymmetric_from_sorted(&self.scores, alpha))
    }
}

/// Compute calibration scores for every row of `d2`.
///
/// The predictor (and spread model, when used) must have been fitted on
/// data disjoint from `d2`; overlapping training rows are a contract error.
pub fn calibrate(
    kind: ResidualKind,
    predictor: &dyn MeanPredictor,
    spread: Option<SharedSpread>,
    d2: &Dataset,
    spec: &IntervalSpec,
) -> Result<CalibrationScores> {
    IntervalSpec::new(spec.alpha, spec.mode)?;
    if let Some(prov) = predictor.provenance() {
        if prov.overlaps(d2) {
            return Err(Error::contract(
                "predictor was trained on rows that appear in the calibration set",
            ));
        }
    }
    if let Some(sp) = &spread {
        if let Some(prov) = sp.provenance() {
            if prov.overlaps(d2) {
                return Err(Error::contract(
                    "spread model was trained on rows that appear in the calibration set",
                ));
            }
        }
    }
    if kind.requires_spread() && spread.is_none() {
        return Err(Error::config(format!("residual kind '{kind}' requires a spread model")));
    }

    let p = predictor.power();
    let mut scores = Vec::with_capacity(d2.n_rows());
    for i in 0..d2.n_rows() {
        let row = d2.feature_row(i);
        let mu = predictor.predict_mean(&row)?;
        let rho = match &spread {
            Some(sp) if kind.requires_spread() => Some(sp.predict_spread(&row)?),
            _ => None,
        };
        scores.push(score(kind, d2.target()[i], mu, p, rho, spec.mode)?);
    }
    CalibrationScores::from_scores(kind, spec.mode, p, scores, spread)
}

// ---------------------------------------------------------------------------
// Interval inversion
// ---------------------------------------------------------------------------

/// Absolute tolerance for deviance root finding around a mean `mu`.
fn deviance_tol(mu: f64) -> f64 {
    1e-9 * (1.0 + mu)
}

const ROOT_MAX_ITER: usize = 200;

/// Solve `d(y, mu) = q2` for the root on `[0, mu]` (the deviance is
/// decreasing there).
fn deviance_root_left(mu: f64, p: f64, q2: f64) -> Result<f64> {
    let d0 = unit_deviance(0.0, mu, p)?;
    if q2 >= d0 {
        return Ok(0.0);
    }
    bisect(
        |y| unit_deviance(y, mu, p).expect("validated domain") - q2,
        0.0,
        mu,
        deviance_tol(mu),
        ROOT_MAX_ITER,
    )
}

/// Solve `d(y, mu) = q2` for the root on `[mu, inf)` (increasing side),
/// bracketing by doubling.
fn deviance_root_right(mu: f64, p: f64, q2: f64) -> Result<f64> {
    let mut hi = mu * 2.0 + 1.0;
    let mut guard = 0;
    while unit_deviance(hi, mu, p)? <= q2 {
        hi *= 2.0;
        guard += 1;
        if guard > 400 {
            return Err(Error::numeric(format!(
                "failed to bracket the deviance interval bound at mu={mu}, q^2={q2}"
            )));
        }
    }
    bisect(
        |y| unit_deviance(y, mu, p).expect("validated domain") - q2,
        mu,
        hi,
        deviance_tol(mu),
        ROOT_MAX_ITER,
    )
}

/// Smallest `y >= 0` with signed deviance score equal to `q` (left branch
/// for `q <= 0`, right branch for `q > 0`), clamping at zero when even
/// `y = 0` scores above `q`.
fn signed_deviance_root(mu: f64, p: f64, q: f64) -> Result<f64> {
    if q <= 0.0 {
        deviance_root_left(mu, p, q * q)
    } else {
        deviance_root_right(mu, p, q * q)
    }
}

/// Invert a symmetric score threshold into the exact interval
/// `{y >= 0 : score(kind, y, mu, p, spread) <= q}`.
pub fn invert_interval(
    kind: ResidualKind,
    mu: f64,
    q: f64,
    p: f64,
    spread: Option<f64>,
) -> Result<PredictionInterval> {
    let rho = check_score_inputs(0.0, mu, p, kind, spread)?;
    if q.is_nan() || q < 0.0 {
        return Err(Error::parameter(format!("symmetric quantile must be nonnegative, got {q}")));
    }
    if q.is_infinite() {
        return PredictionInterval::new(0.0, f64::INFINITY);
    }
    let interval = match kind {
        ResidualKind::Pearson => {
            let s = mu.powf(p / 2.0);
            PredictionInterval::new((mu - q * s).max(0.0), mu + q * s)?
        }
        ResidualKind::Unstandardized => PredictionInterval::new((mu - q).max(0.0), mu + q)?,
        ResidualKind::LocallyWeightedPearson => {
            let s = rho * mu.powf(p / 2.0);
            PredictionInterval::new((mu - q * s).max(0.0), mu + q * s)?
        }
        ResidualKind::LeiLocallyWeighted => {
            PredictionInterval::new((mu - q * rho).max(0.0), mu + q * rho)?
        }
        ResidualKind::Anscombe => {
            // Back-transform through t = y^(1-p/3), with the lower end
            // truncated inside the power.
            let e = 1.0 - p / 3.0;
            let back = 3.0 / (3.0 - p);
            let m = mu.powf(e);
            let s = mu.powf(p / 6.0);
            let lo = ((m - q * s).max(0.0)).powf(back);
            let hi = (m + q * s).powf(back);
            PredictionInterval::new(lo, hi)?
        }
        ResidualKind::Deviance => {
            let q2 = q * q;
            let lo = deviance_root_left(mu, p, q2)?;
            let hi = deviance_root_right(mu, p, q2)?;
            PredictionInterval::new(lo, hi.max(lo))?
        }
    };
    Ok(interval)
}

/// Invert a pair of raw-score quantiles `(q_lo, q_hi)` into
/// `{y >= 0 : q_lo <= signed_score(y) <= q_hi}`.
///
/// Every signed score is increasing in `y`, so the set is one interval. A
/// pair excluding all of `[0, inf)` degenerates to `[0, 0]`.
pub fn invert_asymmetric(
    kind: ResidualKind,
    mu: f64,
    quantiles: (f64, f64),
    p: f64,
    spread: Option<f64>,
) -> Result<PredictionInterval> {
    let rho = check_score_inputs(0.0, mu, p, kind, spread)?;
    let (q_lo, q_hi) = quantiles;
    if q_lo.is_nan() || q_hi.is_nan() || q_lo > q_hi {
        return Err(Error::parameter(format!("malformed quantile pair ({q_lo}, {q_hi})")));
    }

    let linear = |scale: f64| -> Result<PredictionInterval> {
        let lo = if q_lo.is_infinite() { 0.0 } else { (mu + q_lo * scale).max(0.0) };
        let hi = if q_hi.is_infinite() {
            f64::INFINITY
        } else {
            (mu + q_hi * scale).max(0.0)
        };
        PredictionInterval::new(lo.min(hi), hi)
    };

    match kind {
        ResidualKind::Pearson => linear(mu.powf(p / 2.0)),
        ResidualKind::Unstandardized => linear(1.0),
        ResidualKind::LocallyWeightedPearson => linear(rho * mu.powf(p / 2.0)),
        ResidualKind::LeiLocallyWeighted => linear(rho),
        ResidualKind::Anscombe => {
            let e = 1.0 - p / 3.0;
            let back = 3.0 / (3.0 - p);
            let m = mu.powf(e);
            let s = mu.powf(p / 6.0);
            let lo = if q_lo.is_infinite() {
                0.0
            } else {
                ((m + q_lo * s).max(0.0)).powf(back)
            };
            let hi = if q_hi.is_infinite() {
                f64::INFINITY
            } else {
                ((m + q_hi * s).max(0.0)).powf(back)
            };
            PredictionInterval::new(lo.min(hi), hi)
        }
        ResidualKind::Deviance => {
            let lo = if q_lo.is_infinite() {
                0.0
            } else {
                signed_deviance_root(mu, p, q_lo)?
            };
            let hi = if q_hi.is_infinite() {
                f64::INFINITY
            } else if q_hi < 0.0 && unit_deviance(0.0, mu, p)? < q_hi * q_hi {
                // Even y = 0 scores above q_hi: empty set.
                0.0
            } else {
                signed_deviance_root(mu, p, q_hi)?
            };
            PredictionInterval::new(lo.min(hi), hi)
        }
    }
}

/// Compose prediction, quantile lookup, and interval inversion for one row.
pub fn predict_interval(
    calib: &CalibrationScores,
    predictor: &dyn MeanPredictor,
    x: &[FeatureValue<'_>],
    spec: &IntervalSpec,
) -> Result<PredictionInterval> {
    IntervalSpec::new(spec.alpha, spec.mode)?;
    if spec.mode != calib.mode {
        return Err(Error::config(format!(
            "interval mode {} does not match the calibration mode {}",
            spec.mode, calib.mode
        )));
    }
    if (predictor.power() - calib.power).abs() > 1e-12 {
        return Err(Error::config(format!(
            "predictor power {} does not match the calibration power {}",
            predictor.power(),
            calib.power
        )));
    }
    let mu = predictor.predict_mean(x)?;
    let rho = match &calib.spread {
        Some(sp) if calib.kind.requires_spread() => Some(sp.predict_spread(x)?),
        _ => None,
    };
    match spec.mode {
        IntervalMode::Symmetric => {
            let q = quantile_from_sorted(&calib.scores, spec.alpha);
            invert_interval(calib.kind, mu, q, calib.power, rho)
        }
        IntervalMode::Asymmetric => {
            let quantiles = asymmetric_from_sorted(&calib.scores, spec.alpha);
            invert_asymmetric(calib.kind, mu, quantiles, calib.power, rho)
        }
    }
}
