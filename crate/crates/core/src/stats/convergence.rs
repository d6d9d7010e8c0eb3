//! Weak-error measurement and observed-order fitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::EnsembleStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakError {
    pub error: f64,
    pub stderr: f64,
}

/// `|E f(X_N) − reference|` against an exactly known value.
pub fn weak_error_exact(stats: &EnsembleStats, reference: f64) -> Result<WeakError> {
    if !reference.is_finite() {
        return Err(Error::InvalidParameter(format!("reference must be finite, got {reference}")));
    }
    Ok(WeakError { error: (stats.mean - reference).abs(), stderr: stats.stderr })
}

/// `|E f(X_h) − E f(X_{h/2})|` from two independent ensembles.
pub fn weak_error_self(stats_h: &EnsembleStats, stats_half: &EnsembleStats) -> Result<WeakError> {
    let (a, b) = (stats_h.horizon, stats_half.horizon);
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(Error::MismatchedHorizon(a, b));
    }
    Ok(WeakError {
        error: (stats_h.mean - stats_half.mean).abs(),
        stderr: stats_h.stderr.hypot(stats_half.stderr),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error: f64,
    pub stderr: f64,
    /// Whether the row entered the fit.
    #[serde(default)]
    pub used: bool,
}

impl ConvergenceRow {
    pub fn new(h: f64, error: f64, stderr: f64) -> Self {
        Self { h, error, stderr, used: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Sorted by `h`, largest first.
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log₂ error` against `log₂ h`.
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
}

/// Fits the observed order, excluding rows whose error does not exceed
/// their standard error.
pub fn fit_order(rows: &[ConvergenceRow]) -> Result<ConvergenceReport> {
    fit_order_with_threshold(rows, 1.0)
}

/// Fits the observed order using only rows with `error > min_ratio · stderr`
/// (and `error > 0`). At least three rows must survive.
pub fn fit_order_with_threshold(rows: &[ConvergenceRow], min_ratio: f64) -> Result<ConvergenceReport> {
    let mut rows: Vec<ConvergenceRow> = rows.to_vec();
    rows.sort_by(|a, b| b.h.total_cmp(&a.h));
    for r in rows.iter_mut() {
        r.used = r.error > 0.0 && r.error.is_finite() && r.h > 0.0 && r.error > min_ratio * r.stderr;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.used).map(|r| (r.h.log2(), r.error.log2())).unzip();
    let n = xs.len();
    if n < 3 {
        return Err(Error::NonpositiveError { usable: n });
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all fitted rows share one step length".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_stderr = (ssr / (n - 2) as f64 / sxx).sqrt();
    Ok(ConvergenceReport { rows, slope, slope_stderr, intercept })
}
