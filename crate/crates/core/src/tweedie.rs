//! Tweedie compound Poisson-Gamma mathematics.
//!
//! A Tweedie variable with power `p` in (1, 2) is a Poisson-distributed sum
//! of i.i.d. Gamma jumps: it has a point mass at zero and a skewed
//! continuous part on the positive axis, with mean `mu` and variance
//! `phi * mu^p`. The density is
//!
//! ```text
//! p(y | mu, phi, p) = exp{ (y*mu^(1-p)/(1-p) - mu^(2-p)/(2-p)) / phi + c(y, phi, p) }
//! ```
//!
//! where `c(0, phi, p) = 0` and, for `y > 0`, `c` involves an infinite
//! series that this module evaluates by locating the largest term in log
//! space and summing outward until the remaining terms are negligible.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numeric::golden_section_max;

/// Per-term cutoff for the density series, relative to the running sum.
const SERIES_TERM_CUTOFF: f64 = 1e-17;
/// Hard budget on evaluated series terms.
const SERIES_MAX_TERMS: usize = 100_000;

/// Parameters (mu, phi, p) of a compound Poisson-Gamma distribution.
///
/// `mu` is the mean in target units, `phi` the dispersion, and `p` the
/// variance power, restricted to the open interval (1, 2) where the
/// distribution mixes a zero atom with a continuous positive part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TweedieParams {
    mu: f64,
    phi: f64,
    p: f64,
}

impl TweedieParams {
    pub fn new(mu: f64, phi: f64, p: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::parameter(format!("mu must be positive and finite, got {mu}")));
        }
        if !(phi.is_finite() && phi > 0.0) {
            return Err(Error::parameter(format!("phi must be positive and finite, got {phi}")));
        }
        check_power(p)?;
        Ok(Self { mu, phi, p })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn power(&self) -> f64 {
        self.p
    }

    /// Rate of the underlying Poisson count: `mu^(2-p) / (phi * (2-p))`.
    ///
    /// The probability of an exact zero is `exp(-rate)`.
    pub fn poisson_rate(&self) -> f64 {
        self.mu.powf(2.0 - self.p) / (self.phi * (2.0 - self.p))
    }

    /// Shape of each Gamma jump: `(2-p) / (p-1)`.
    pub fn gamma_shape(&self) -> f64 {
        (2.0 - self.p) / (self.p - 1.0)
    }

    /// Scale of each Gamma jump: `phi * (p-1) * mu^(p-1)`.
    pub fn gamma_scale(&self) -> f64 {
        self.phi * (self.p - 1.0) * self.mu.powf(self.p - 1.0)
    }
}

/// Strictly increasing grid of candidate powers in (1, 2).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    values: Vec<f64>,
}

impl PowerGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::parameter("power grid must be non-empty"));
        }
        for &p in &values {
            check_power(p)?;
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::parameter("power grid must be strictly increasing"));
        }
        Ok(Self { values })
    }

    /// Single-candidate grid.
    pub fn single(p: f64) -> Result<Self> {
        Self::new(vec![p])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for PowerGrid {
    /// The grid {1.1, 1.2, ..., 1.9}.
    fn default() -> Self {
        Self {
            values: (1..=9).map(|k| 1.0 + k as f64 / 10.0).collect(),
        }
    }
}

fn check_power(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0 && p < 2.0) {
        return Err(Error::parameter(format!(
            "power must lie strictly inside (1, 2), got {p}"
        )));
    }
    Ok(())
}

/// Variance function `V(mu) = mu^p`, so that `var(Y) = phi * V(mu)`.
pub fn variance_function(mu: f64, p: f64) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::parameter(format!("mu must be positive, got {mu}")));
    }
    check_power(p)?;
    Ok(mu.powf(p))
}

/// Log density `log p(y | mu, phi, p)` of the compound Poisson-Gamma
/// distribution, exact at `y = 0` and series-evaluated for `y > 0`.
pub fn log_density(y: f64, params: &TweedieParams) -> Result<f64> {
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::parameter(format!("y must be nonnegative and finite, got {y}")));
    }
    let (mu, phi, p) = (params.mu, params.phi, params.p);
    if y == 0.0 {
        // P(Y = 0) = exp(-lambda) with lambda = mu^(2-p) / (phi*(2-p)).
        return Ok(-mu.powf(2.0 - p) / (phi * (2.0 - p)));
    }
    let base = (y * mu.powf(1.0 - p) / (1.0 - p) - mu.powf(2.0 - p) / (2.0 - p)) / phi;
    let log_w = log_series_sum(y, phi, p)?;
    Ok(base - y.ln() + log_w)
}

/// Log of the series `W = sum_{j>=1} y^(j*a) / (phi^(j(1+a)) (2-p)^j (p-1)^(j*a) j! Gamma(j*a))`
/// with `a = (2-p)/(p-1)`, accumulated in log space around its largest term.
fn log_series_sum(y: f64, phi: f64, p: f64) -> Result<f64> {
    let alpha = (2.0 - p) / (p - 1.0);
    let log_y = y.ln();
    let log_phi = phi.ln();
    let log_term = |j: f64| -> f64 {
        j * alpha * log_y
            - j * alpha * (p - 1.0).ln()
            - j * (1.0 + alpha) * log_phi
            - j * (2.0 - p).ln()
            - ln_gamma(j + 1.0)
            - ln_gamma(j * alpha)
    };

    // Index of the largest term, from the continuous stationary point.
    let j_peak = y.powf(2.0 - p) / (phi * (2.0 - p));
    let j_start = j_peak.round().max(1.0);
    if j_start > SERIES_MAX_TERMS as f64 {
        return Err(Error::numeric(format!(
            "density series peak index {j_start:.0} exceeds the {SERIES_MAX_TERMS}-term budget \
             (y={y}, phi={phi}, p={p})"
        )));
    }

    let mut scale = log_term(j_start);
    let mut total = 1.0_f64;
    let mut terms_used = 1usize;

    // Upward sweep from the peak.
    let mut j = j_start + 1.0;
    loop {
        let lt = log_term(j);
        if lt > scale {
            total = total * (scale - lt).exp() + 1.0;
            scale = lt;
        } else {
            let t = (lt - scale).exp();
            total += t;
            if t < SERIES_TERM_CUTOFF * total {
                break;
            }
        }
        terms_used += 1;
        if terms_used > SERIES_MAX_TERMS {
            return Err(Error::numeric(format!(
                "density series failed to converge within {SERIES_MAX_TERMS} terms \
                 (peak j={j_start:.0}, reached j={j:.0}, y={y}, phi={phi}, p={p})"
            )));
        }
        j += 1.0;
    }

    // Downward sweep toward j = 1.
    let mut j = j_start - 1.0;
    while j >= 1.0 {
        let lt = log_term(j);
        if lt > scale {
            total = total * (scale - lt).exp() + 1.0;
            scale = lt;
        } else {
            let t = (lt - scale).exp();
            total += t;
            if t < SERIES_TERM_CUTOFF * total {
                break;
            }
        }
        terms_used += 1;
        if terms_used > SERIES_MAX_TERMS {
            return Err(Error::numeric(format!(
                "density series failed to converge within {SERIES_MAX_TERMS} terms \
                 (peak j={j_start:.0}, reached j={j:.0}, y={y}, phi={phi}, p={p})"
            )));
        }
        j -= 1.0;
    }

    Ok(scale + total.ln())
}

/// Unit deviance `d(y, mu) = 2*(y*mu^(1-p)/(p-1) - y^(2-p)/((p-1)(2-p)) + mu^(2-p)/(2-p))`.
///
/// Nonnegative, zero exactly at `y = mu`, and unimodal in `y` around `mu`.
/// The `y^(2-p)` term vanishes at `y = 0`.
pub fn unit_deviance(y: f64, mu: f64, p: f64) -> Result<f64> {
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::parameter(format!("y must be nonnegative and finite, got {y}")));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::parameter(format!("mu must be positive, got {mu}")));
    }
    check_power(p)?;
    let d = 2.0
        * (y * mu.powf(1.0 - p) / (p - 1.0) - y.powf(2.0 - p) / ((p - 1.0) * (2.0 - p))
            + mu.powf(2.0 - p) / (2.0 - p));
    // Rounding can leave a tiny negative residue at y == mu.
    Ok(d.max(0.0))
}

/// Maximum-likelihood dispersion given observed targets and fitted means,
/// found by golden-section search on `log(phi)` over `[1e-8, 1e8]`.
pub fn mle_dispersion(y: &[f64], mu: &[f64], p: f64) -> Result<f64> {
    if y.len() != mu.len() {
        return Err(Error::parameter(format!(
            "target and mean vectors differ in length ({} vs {})",
            y.len(),
            mu.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::parameter("dispersion estimation needs at least 2 observations"));
    }
    check_power(p)?;
    for (&yi, &mi) in y.iter().zip(mu) {
        if !(yi.is_finite() && yi >= 0.0) {
            return Err(Error::parameter(format!("target {yi} is not a nonnegative finite value")));
        }
        if !(mi.is_finite() && mi > 0.0) {
            return Err(Error::parameter(format!("fitted mean {mi} is not positive and finite")));
        }
    }

    let loglik = |log_phi: f64| -> f64 {
        let phi = log_phi.exp();
        let mut total = 0.0;
        for (&yi, &mi) in y.iter().zip(mu) {
            let params = TweedieParams { mu: mi, phi, p };
            match log_density(yi, &params) {
                Ok(ld) if ld.is_finite() => total += ld,
                // Series blow-ups at extreme phi count as impossible.
                _ => return f64::NEG_INFINITY,
            }
        }
        total
    };

    let log_phi_hat = golden_section_max(loglik, 1e-8_f64.ln(), 1e8_f64.ln(), 1e-6);
    if !loglik(log_phi_hat).is_finite() {
        return Err(Error::numeric(
            "dispersion likelihood is non-finite over the entire search range",
        ));
    }
    Ok(log_phi_hat.exp())
}

/// Outcome of profile-likelihood power selection.
#[derive(Debug)]
pub struct PowerSelection<M> {
    /// Selected power.
    pub power: f64,
    /// Model fitted at the selected power.
    pub model: M,
    /// Dispersion MLE at the selected power.
    pub dispersion: f64,
    /// Profile log-likelihood attained by the winner.
    pub log_likelihood: f64,
    /// Grid powers that failed, with the failure cause.
    pub skipped: Vec<(f64, String)>,
}

/// Select the Tweedie power by profile likelihood.
///
/// For each candidate `p`, `trainer` fits a mean function on `train` and
/// returns it together with its in-sample mean predictions. The dispersion
/// is then estimated by maximum likelihood and the full data log-likelihood
/// of the triplet `(p, model, phi_hat)` is compared across the grid.
///
/// Candidates that fail to fit are skipped with a warning; if every
/// candidate fails the overall selection errors out.
pub fn profile_power_select<D: ?Sized, M>(
    train: &D,
    targets: &[f64],
    grid: &PowerGrid,
    mut trainer: impl FnMut(&D, f64) -> Result<(M, Vec<f64>)>,
) -> Result<PowerSelection<M>> {
    let mut best: Option<PowerSelection<M>> = None;
    let mut skipped: Vec<(f64, String)> = Vec::new();

    for &p in grid.values() {
        let mut attempt = || -> Result<(M, f64, f64)> {
            let (model, mu) = trainer(train, p)?;
            if mu.len() != targets.len() {
                return Err(Error::contract(format!(
                    "trainer returned {} predictions for {} training rows",
                    mu.len(),
                    targets.len()
                )));
            }
            let phi = mle_dispersion(targets, &mu, p)?;
            let mut ll = 0.0;
            for (&yi, &mi) in targets.iter().zip(&mu) {
                ll += log_density(yi, &TweedieParams { mu: mi, phi, p })?;
            }
            if !ll.is_finite() {
                return Err(Error::numeric(format!("profile likelihood at p={p} is non-finite")));
            }
            Ok((model, phi, ll))
        };
        match attempt() {
            Ok((model, dispersion, log_likelihood)) => {
                let better = best
                    .as_ref()
                    .map(|b| log_likelihood > b.log_likelihood)
                    .unwrap_or(true);
                if better {
                    best = Some(PowerSelection {
                        power: p,
                        model,
                        dispersion,
                        log_likelihood,
                        skipped: Vec::new(),
                    });
                }
            }
            Err(e) => {
                log::warn!("power candidate p={p} skipped: {e}");
                skipped.push((p, e.to_string()));
            }
        }
    }

    match best {
        Some(mut sel) => {
            sel.skipped = skipped;
            Ok(sel)
        }
        None => Err(Error::numeric(format!(
            "all {} power candidates failed; first failure: {}",
            skipped.len(),
            skipped.first().map(|(_, m)| m.as_str()).unwrap_or("none")
        ))),
    }
}

/// Draw `count` samples from the compound Poisson-Gamma distribution.
///
/// Each draw takes `N ~ Poisson(lambda)` and, when `N > 0`, a
/// `Gamma(N * shape, scale)` variate — the exact law of a sum of `N`
/// i.i.d. `Gamma(shape, scale)` jumps.
pub fn sample_cpg<R: Rng + ?Sized>(params: &TweedieParams, count: usize, rng: &mut R) -> Vec<f64> {
    let lambda = params.poisson_rate();
    let shape = params.gamma_shape();
    let scale = params.gamma_scale();
    let poisson = Poisson::new(lambda).expect("validated params give a positive rate");
    (0..count)
        .map(|_| {
            let n = poisson.sample(rng);
            if n < 0.5 {
                0.0
            } else {
                Gamma::new(n * shape, scale)
                    .expect("positive shape and scale")
                    .sample(rng)
            }
        })
        .collect()
}
