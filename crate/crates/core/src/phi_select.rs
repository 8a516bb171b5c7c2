//! Choice of the Tweedie indices of `φ`, `φ₊`, `φ₋` from the variance
//! structure of the data, and assembly of a feasible composite score.
//!
//! For a fitted mean `μ̂` the squared residuals satisfy roughly
//! `log (y − μ̂)² ≈ log(c/2) + (2 − b) log μ̂`, so an ordinary least squares
//! fit on the log-log scale yields `b = 2 − slope` and `c = 2 e^{intercept}`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::scores::{check_tau, PhiIndex, ScoreForm, ScoreSpec};

/// Floor applied to squared residuals before taking logs.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub b: f64,
    pub c: f64,
    pub intercept: f64,
    pub slope: f64,
    pub n: usize,
}

impl LogLogFit {
    pub fn phi(&self) -> Result<PhiIndex> {
        PhiIndex::new(self.b, self.c)
    }
}

/// OLS of `log max((y − μ̂)², 10⁻¹²)` on `log μ̂`.
pub fn residual_loglog_regression(mu_hat: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if mu_hat.len() != y.len() {
        return Err(Error::domain(format!("{} fitted means for {} responses", mu_hat.len(), y.len())));
    }
    if mu_hat.len() < 3 {
        return Err(Error::domain(format!("need at least 3 points, got {}", mu_hat.len())));
    }
    if let Some(m) = mu_hat.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::domain(format!("fitted means must be positive, got {m}")));
    }
    if let Some(v) = y.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::domain(format!("responses must be positive, got {v}")));
    }
    let xs: Vec<f64> = mu_hat.iter().map(|m| m.ln()).collect();
    let ys: Vec<f64> = mu_hat
        .iter()
        .zip(y)
        .map(|(m, v)| ((v - m) * (v - m)).max(RESIDUAL_FLOOR).ln())
        .collect();
    let n = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / n;
    let y_bar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, v)| (x - x_bar) * (v - y_bar)).sum();
    if !(sxx > 1e-12 * n * (1.0 + x_bar * x_bar)) {
        return Err(Error::domain("fitted means have no spread on the log scale"));
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    Ok(LogLogFit {
        b: 2.0 - slope,
        c: 2.0 * intercept.exp(),
        intercept,
        slope,
        n: xs.len(),
    })
}

/// Score form implied by the fitted indices of `φ₋` and `φ₊`.
pub fn choose_form(b_minus: f64, b_plus: f64) -> Option<ScoreForm> {
    match (b_minus > 1.0, b_plus < 1.0) {
        (true, true) => Some(ScoreForm::Additive),
        (false, true) => Some(ScoreForm::RevelationPlus),
        (true, false) => Some(ScoreForm::RevelationMinus),
        (false, false) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSelection {
    pub all_claims: LogLogFit,
    pub large_claims: LogLogFit,
    pub small_claims: LogLogFit,
    pub chosen_form: ScoreForm,
}

impl PhiSelection {
    /// Builds the score for the chosen form from the three fits.
    pub fn assemble(
        all_claims: LogLogFit,
        large_claims: LogLogFit,
        small_claims: LogLogFit,
        tau: f64,
        g_scale: f64,
    ) -> Result<(ScoreSpec, PhiSelection)> {
        check_tau(tau)?;
        let form = choose_form(small_claims.b, large_claims.b).ok_or(Error::Infeasible {
            b_all: all_claims.b,
            b_plus: large_claims.b,
            b_minus: small_claims.b,
        })?;
        let spec = match form {
            ScoreForm::Additive => ScoreSpec::additive(tau, small_claims.phi()?, large_claims.phi()?, g_scale)?,
            ScoreForm::RevelationPlus => ScoreSpec::revelation_plus(tau, all_claims.phi()?, large_claims.phi()?, g_scale)?,
            ScoreForm::RevelationMinus => {
                ScoreSpec::revelation_minus(tau, all_claims.phi()?, small_claims.phi()?, g_scale)?
            }
        };
        Ok((
            spec,
            PhiSelection {
                all_claims,
                large_claims,
                small_claims,
                chosen_form: form,
            },
        ))
    }

    /// Three-column text table of the regression parameters.
    pub fn table(&self) -> String {
        let cols = [self.all_claims, self.large_claims, self.small_claims];
        let mut out = String::new();
        let _ = writeln!(out, "{:<22}{:>14}{:>14}{:>14}", "", "all claims", "large claims", "small claims");
        let _ = writeln!(out, "{:<22}{:>14}{:>14}{:>14}", "", "phi", "phi_plus", "phi_minus");
        type Getter = fn(&LogLogFit) -> f64;
        let rows: [(&str, Getter); 4] = [
            ("intercept log(c/2)", |f| f.intercept),
            ("slope 2-b", |f| f.slope),
            ("parameter b", |f| f.b),
            ("parameter c", |f| f.c),
        ];
        for (name, get) in rows {
            let _ = write!(out, "{name:<22}");
            for f in &cols {
                let _ = write!(out, "{:>14.3}", get(f));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "chosen form: {}", self.chosen_form.name());
        out
    }
}

/// Runs the three variance regressions and assembles a feasible score.
///
/// `mean_pred` and `quantile_pred` are the pre-fitted mean and τ-quantile on
/// `dataset`. `refit_mean` fits a mean model on a subset and returns its
/// in-sample predictions; it is called for the small claims
/// (`y ≤ Q̂_τ(x)`) and the large claims separately.
pub fn select_composite_spec<F>(
    dataset: &Dataset,
    tau: f64,
    mean_pred: &[f64],
    quantile_pred: &[f64],
    mut refit_mean: F,
    g_scale: f64,
) -> Result<(ScoreSpec, PhiSelection)>
where
    F: FnMut(&Dataset) -> Result<Vec<f64>>,
{
    check_tau(tau)?;
    let ys = dataset.responses();
    if mean_pred.len() != ys.len() || quantile_pred.len() != ys.len() {
        return Err(Error::domain("pre-fitted predictions do not match the dataset"));
    }
    let all = residual_loglog_regression(mean_pred, ys)?;
    let (small, large): (Vec<usize>, Vec<usize>) = (0..ys.len()).partition(|&i| ys[i] <= quantile_pred[i]);
    let mut subset_fit = |idx: &[usize], label: &str| -> Result<LogLogFit> {
        if idx.len() < 3 {
            return Err(Error::domain(format!("only {} {label} claims", idx.len())));
        }
        let sub = dataset.subset(idx);
        let mu = refit_mean(&sub)?;
        residual_loglog_regression(&mu, sub.responses())
    };
    let large_fit = subset_fit(&large, "large")?;
    let small_fit = subset_fit(&small, "small")?;
    PhiSelection::assemble(all, large_fit, small_fit, tau, g_scale)
}
