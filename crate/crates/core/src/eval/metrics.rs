use crate::{Error, Point2, Result};

/// Slack added to CDF thresholds so that grid-spacing errors computed from
/// rounded coordinates still count at their nominal threshold.
pub const CDF_EPS: f64 = 1e-9;

/// Root of the mean squared 2D positioning error.
pub fn mspe(estimates: &[Point2], truths: &[Point2]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::Dimension(format!(
            "{} estimates for {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::domain("MSPE of an empty sample"));
    }
    let sum: f64 = estimates
        .iter()
        .zip(truths)
        .map(|(e, t)| (e.x - t.x).powi(2) + (e.y - t.y).powi(2))
        .sum();
    Ok((sum / estimates.len() as f64).sqrt())
}

/// Fraction of `errors` at or below each threshold. An empty error list
/// yields all zeros.
pub fn error_cdf(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e <= t + CDF_EPS) as f64 / n)
        .collect()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn percentile(errors: &[f64], q: f64) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}
