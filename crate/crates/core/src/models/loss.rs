//! Boosting objectives: Tweedie negative log-likelihood on the log scale,
//! and squared error for spread models.

use crate::error::{Error, Result};

/// Scores are clamped to this range before exponentiation.
pub const SCORE_CLAMP: f64 = 30.0;

/// Tweedie negative log-likelihood (up to the dispersion and the `c` term)
/// as a function of the log-mean score `F`:
///
/// ```text
/// l(y, F) = -y * exp((1-p)F) / (1-p) + exp((2-p)F) / (2-p)
/// ```
pub fn tweedie_loss(y: f64, score: f64, p: f64) -> f64 {
    let f = score.clamp(-SCORE_CLAMP, SCORE_CLAMP);
    -y * ((1.0 - p) * f).exp() / (1.0 - p) + ((2.0 - p) * f).exp() / (2.0 - p)
}

/// Gradient and hessian of [`tweedie_loss`] in the score `F`.
///
/// The hessian `y(p-1)e^((1-p)F) + (2-p)e^((2-p)F)` is strictly positive
/// for `p` in (1, 2), which keeps Newton leaf values well defined.
pub fn tweedie_loss_grad_hess(y: f64, score: f64, p: f64) -> Result<(f64, f64)> {
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::parameter(format!("y must be nonnegative and finite, got {y}")));
    }
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::parameter(format!("power must lie in (1, 2), got {p}")));
    }
    let f = score.clamp(-SCORE_CLAMP, SCORE_CLAMP);
    let e1 = ((1.0 - p) * f).exp();
    let e2 = ((2.0 - p) * f).exp();
    let grad = -y * e1 + e2;
    let hess = -y * (1.0 - p) * e1 + (2.0 - p) * e2;
    Ok((grad, hess))
}

/// Objective minimized by the tree booster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Tweedie deviance on a log link; predictions are `exp(score)`.
    Tweedie { power: f64 },
    /// Squared error on an identity link; predictions are the raw score.
    SquaredError,
}

impl Objective {
    /// Initial score: the unconditional optimum for this objective.
    pub fn init_score(&self, targets: &[f64]) -> f64 {
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        match self {
            Objective::Tweedie { .. } => mean.max(1e-8).ln(),
            Objective::SquaredError => mean,
        }
    }

    pub fn grad_hess(&self, y: f64, score: f64) -> (f64, f64) {
        match self {
            Objective::Tweedie { power } => {
                tweedie_loss_grad_hess(y, score, *power).expect("targets validated at fit time")
            }
            Objective::SquaredError => (score - y, 1.0),
        }
    }

    pub fn loss(&self, y: f64, score: f64) -> f64 {
        match self {
            Objective::Tweedie { power } => tweedie_loss(y, score, *power),
            Objective::SquaredError => 0.5 * (score - y) * (score - y),
        }
    }

    /// Map a raw score to the mean scale.
    pub fn mean(&self, score: f64) -> f64 {
        match self {
            Objective::Tweedie { .. } => score.clamp(-SCORE_CLAMP, SCORE_CLAMP).exp(),
            Objective::SquaredError => score,
        }
    }
}
