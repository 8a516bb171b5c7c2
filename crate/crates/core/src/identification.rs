//! Identification functions for the composite triplet and the out-of-sample
//! calibration statistics derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{check_tau, s_pair_raw, CompositeTriplet};

/// `V(y; e⁻, v, e⁺) = (e⁻ + S⁻/τ, 1{y ≤ v} − τ, e⁺ − S⁺/(1−τ))`.
pub fn identification_v(y: f64, t: &CompositeTriplet, tau: f64) -> Result<(f64, f64, f64)> {
    check_tau(tau)?;
    Ok(identification_v_raw(y, t, tau))
}

fn identification_v_raw(y: f64, t: &CompositeTriplet, tau: f64) -> (f64, f64, f64) {
    let (s_minus, s_plus) = s_pair_raw(y, t.v, tau);
    let below = if y <= t.v { 1.0 } else { 0.0 };
    (
        t.e_minus + s_minus / tau,
        below - tau,
        t.e_plus - s_plus / (1.0 - tau),
    )
}

/// The full-rank linear transform of [`identification_v`] whose first row
/// identifies the mean: `(τe⁻ + (1−τ)e⁺ − y, 1{y ≤ v} − τ, e⁺ − S⁺/(1−τ))`.
pub fn identification_v_tilde(y: f64, t: &CompositeTriplet, tau: f64) -> Result<(f64, f64, f64)> {
    let (a, b, c) = identification_v(y, t, tau)?;
    Ok((tau * a + (1.0 - tau) * c, b, c))
}

/// Empirical calibration of a set of triplet predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Fraction of observations at or below the predicted quantile.
    pub coverage: f64,
    /// Mean of the lower-ES identification component.
    pub v_minus: f64,
    /// Mean of the upper-ES identification component.
    pub v_plus: f64,
    /// Monte Carlo standard errors of `v_minus` and `v_plus`.
    pub v_minus_se: f64,
    pub v_plus_se: f64,
    pub n: usize,
}

/// Coverage ratio and mean lower/upper identification values.
pub fn calibration_report(
    predictions: &[CompositeTriplet],
    observations: &[f64],
    tau: f64,
) -> Result<CalibrationReport> {
    check_tau(tau)?;
    if predictions.len() != observations.len() {
        return Err(Error::domain(format!(
            "{} predictions but {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::domain("calibration needs at least one observation"));
    }
    let n = predictions.len() as f64;
    let mut hits = 0usize;
    let (mut s1, mut s3, mut q1, mut q3) = (0.0, 0.0, 0.0, 0.0);
    for (t, &y) in predictions.iter().zip(observations) {
        let (a, _, c) = identification_v_raw(y, t, tau);
        if y <= t.v {
            hits += 1;
        }
        s1 += a;
        s3 += c;
        q1 += a * a;
        q3 += c * c;
    }
    let (m1, m3) = (s1 / n, s3 / n);
    let se = |sum_sq: f64, mean: f64| -> f64 {
        if predictions.len() < 2 {
            return f64::NAN;
        }
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    };
    Ok(CalibrationReport {
        coverage: hits as f64 / n,
        v_minus: m1,
        v_plus: m3,
        v_minus_se: se(q1, m1),
        v_plus_se: se(q3, m3),
        n: predictions.len(),
    })
}

/// `v̂₋` written out in its expanded empirical form.
pub fn expanded_v_minus(predictions: &[CompositeTriplet], observations: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_lengths(predictions, observations)?;
    let sum: f64 = predictions
        .iter()
        .zip(observations)
        .map(|(t, &y)| {
            let below = if y <= t.v { 1.0 } else { 0.0 };
            t.e_minus - y / tau * below + t.v / tau * (below - tau)
        })
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// `v̂₊` written out in its expanded empirical form.
pub fn expanded_v_plus(predictions: &[CompositeTriplet], observations: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_lengths(predictions, observations)?;
    let sum: f64 = predictions
        .iter()
        .zip(observations)
        .map(|(t, &y)| {
            let above = if y > t.v { 1.0 } else { 0.0 };
            t.e_plus - y / (1.0 - tau) * above - t.v / (1.0 - tau) * (1.0 - tau - above)
        })
        .sum();
    Ok(sum / predictions.len() as f64)
}

fn check_lengths(predictions: &[CompositeTriplet], observations: &[f64]) -> Result<()> {
    if predictions.len() != observations.len() || predictions.is_empty() {
        return Err(Error::domain(format!(
            "need equal nonzero lengths, got {} predictions and {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    Ok(())
}

/// Out-of-sample coverage of a single quantile prediction vector.
pub fn coverage_ratio(quantiles: &[f64], observations: &[f64]) -> Result<f64> {
    if quantiles.len() != observations.len() || quantiles.is_empty() {
        return Err(Error::domain("coverage needs equal nonzero lengths"));
    }
    let hits = quantiles.iter().zip(observations).filter(|(q, y)| y <= q).count();
    Ok(hits as f64 / quantiles.len() as f64)
}
