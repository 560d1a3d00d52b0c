//! Shared test oracles, independent of the implementation paths they check.

#![allow(dead_code)]

use tweedie_conformal_core::data::{Column, ColumnData, Dataset};

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

/// Integrate the continuous part of a Tweedie density over `(0, upper)`.
///
/// Substitutes `y = t^m` with `m` large enough to absorb the integrable
/// `y^(alpha-1)` singularity at zero (`alpha = (2-p)/(p-1)` can drop below
/// one for large `p`).
pub fn integrate_density(density: &dyn Fn(f64) -> f64, p: f64, upper: f64, tol: f64) -> f64 {
    let alpha = (2.0 - p) / (p - 1.0);
    let m = ((1.0 / alpha).ceil() as i32 + 1).max(2) as f64;
    let g = |t: f64| -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            density(t.powf(m)) * m * t.powf(m - 1.0)
        }
    };
    adaptive_simpson(&g, 0.0, upper.powf(1.0 / m), tol)
}

/// Unregularized Tweedie GLM fit with a log link via iteratively
/// reweighted least squares: an independent check on the proximal-gradient
/// solver at `lambda = 0`.
///
/// `x` is row-major without an intercept column. Returns `(beta0, beta)`.
pub fn irls_tweedie(x: &[Vec<f64>], y: &[f64], p: f64) -> (f64, Vec<f64>) {
    use nalgebra::{DMatrix, DVector};
    let n = y.len();
    let d = x[0].len() + 1;
    let design = DMatrix::from_fn(n, d, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut eta = DVector::from_element(n, y_mean.max(1e-8).ln());
    let mut beta = DVector::zeros(d);
    for _ in 0..200 {
        // Log link: w = mu^(2-p), z = eta + (y - mu)/mu.
        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let w: Vec<f64> = mu.iter().map(|m| m.powf(2.0 - p)).collect();
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (y[i] - mu[i]) / mu[i]).collect();

        let mut xtwx = DMatrix::zeros(d, d);
        let mut xtwz = DVector::zeros(d);
        for i in 0..n {
            let row = design.row(i);
            for a in 0..d {
                xtwz[a] += w[i] * row[a] * z[i];
                for b in 0..d {
                    xtwx[(a, b)] += w[i] * row[a] * row[b];
                }
            }
        }
        let new_beta = xtwx
            .lu()
            .solve(&xtwz)
            .expect("well-conditioned IRLS system");
        let change = (&new_beta - &beta).amax();
        beta = new_beta;
        eta = &design * &beta;
        if change < 1e-12 {
            break;
        }
    }
    (beta[0], beta.iter().skip(1).copied().collect())
}

/// Build a numeric-only dataset from a row-major matrix.
pub fn numeric_dataset(x: &[Vec<f64>], y: Vec<f64>) -> Dataset {
    let d = x[0].len();
    let columns: Vec<Column> = (0..d)
        .map(|j| Column {
            name: format!("x{}", j + 1),
            data: ColumnData::Numeric(x.iter().map(|row| row[j]).collect()),
        })
        .collect();
    Dataset::from_parts(columns, y, "y").unwrap()
}

/// Upper-tail chi-square critical value.
pub fn chi_square_critical(df: usize, significance: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - significance)
}
