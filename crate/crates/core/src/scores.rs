//! Strictly consistent scoring functions for quantiles, expected shortfall and
//! the composite triplet (ES⁻, q, ES⁺), together with their analytic partial
//! derivatives in the prediction arguments.
//!
//! The composite score is assembled from three pieces:
//!
//! - a generalized piecewise linear part `g_scale · (y − v)(τ − 1{y ≤ v})`,
//! - a Bregman-type part driven by the convex function Φ(e⁻, e⁺),
//! - the Tweedie family `φ_b` from which every convex building block of Φ is drawn.
//!
//! Three shapes of Φ are supported, see [`ScoreForm`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to arguments of `φ_b` before evaluation.
pub const PHI_FLOOR: f64 = 1e-12;

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("probability level {tau} outside (0, 1)")))
    }
}

#[inline]
fn indicator(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

/// Pinball loss `(y − a)(τ − 1{y ≤ a})`.
pub fn pinball_loss(y: f64, a: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(pinball_raw(y, a, tau))
}

#[inline]
pub(crate) fn pinball_raw(y: f64, a: f64, tau: f64) -> f64 {
    (y - a) * (tau - indicator(y <= a))
}

/// The pair `(S⁻_τ(y; a), S⁺_τ(y; a))`.
///
/// `S⁺ = S⁻ + y` and `L_τ = S⁻ + τ y`, so both share the argmin of the pinball loss.
pub fn s_pair(y: f64, a: f64, tau: f64) -> Result<(f64, f64)> {
    check_tau(tau)?;
    Ok(s_pair_raw(y, a, tau))
}

#[inline]
pub(crate) fn s_pair_raw(y: f64, a: f64, tau: f64) -> (f64, f64) {
    let below = indicator(y <= a);
    let above = 1.0 - below;
    let s_minus = (below - tau) * a - below * y;
    let s_plus = (1.0 - tau - above) * a + above * y;
    (s_minus, s_plus)
}

/// `φ_b(y)` (order 0) or its first/second derivative (order 1/2).
pub fn tweedie_phi(b: f64, y: f64, order: u8) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::domain(format!("phi_b needs y > 0, got {y}")));
    }
    if !b.is_finite() {
        return Err(Error::domain(format!("phi_b index must be finite, got {b}")));
    }
    match order {
        0 => Ok(phi_value(b, y)),
        1 => Ok(phi_first(b, y)),
        2 => Ok(phi_second(b, y)),
        _ => Err(Error::domain(format!("derivative order {order} not in {{0, 1, 2}}"))),
    }
}

#[inline]
fn phi_value(b: f64, y: f64) -> f64 {
    let y = y.max(PHI_FLOOR);
    if b == 0.0 {
        -2.0 * y.ln()
    } else if b == 1.0 {
        2.0 * y * y.ln() - 2.0 * y
    } else {
        2.0 / (b * (b - 1.0)) * y.powf(b)
    }
}

#[inline]
fn phi_first(b: f64, y: f64) -> f64 {
    let y = y.max(PHI_FLOOR);
    if b == 0.0 {
        -2.0 / y
    } else if b == 1.0 {
        2.0 * y.ln()
    } else {
        2.0 / (b - 1.0) * y.powf(b - 1.0)
    }
}

#[inline]
fn phi_second(b: f64, y: f64) -> f64 {
    let y = y.max(PHI_FLOOR);
    2.0 * y.powf(b - 2.0)
}

/// Bregman divergence `L_{φ_b}(y; a)`; the Tweedie deviance with power `2 − b` for `b ∉ (1, 2)`.
pub fn bregman_loss(y: f64, a: f64, b: f64) -> Result<f64> {
    if !(y > 0.0 && a > 0.0) {
        return Err(Error::domain(format!(
            "Bregman loss needs positive arguments, got y = {y}, a = {a}"
        )));
    }
    if !b.is_finite() {
        return Err(Error::domain(format!("phi_b index must be finite, got {b}")));
    }
    Ok(bregman_raw(y, a, b))
}

#[inline]
pub(crate) fn bregman_raw(y: f64, a: f64, b: f64) -> f64 {
    let y = y.max(PHI_FLOOR);
    let a = a.max(PHI_FLOOR);
    let d = if b == 0.0 {
        2.0 * ((a / y).ln() + (y - a) / a)
    } else if b == 1.0 {
        2.0 * (y * (y / a).ln() + a - y)
    } else {
        2.0 * (y.powf(b) / (b * (b - 1.0)) - y * a.powf(b - 1.0) / (b - 1.0) + a.powf(b) / b)
    };
    // rounding can push an exact zero slightly negative
    d.max(0.0)
}

/// Index into the Tweedie family together with a positive scale.
///
/// The scaled function is `(c/2) · φ_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiIndex {
    pub b: f64,
    pub c: f64,
}

impl PhiIndex {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        let idx = PhiIndex { b, c };
        idx.validate()?;
        Ok(idx)
    }

    fn validate(&self) -> Result<()> {
        if !self.b.is_finite() {
            return Err(Error::domain(format!("phi index b must be finite, got {}", self.b)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::domain(format!("phi scale c must be positive, got {}", self.c)));
        }
        Ok(())
    }

    #[inline]
    fn weight(&self) -> f64 {
        0.5 * self.c
    }

    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        self.weight() * phi_value(self.b, y)
    }

    #[inline]
    pub fn first(&self, y: f64) -> f64 {
        self.weight() * phi_first(self.b, y)
    }

    #[inline]
    pub fn second(&self, y: f64) -> f64 {
        self.weight() * phi_second(self.b, y)
    }

    #[inline]
    pub fn bregman(&self, y: f64, a: f64) -> f64 {
        self.weight() * bregman_raw(y, a, self.b)
    }
}

/// Shape of the convex function Φ(e⁻, e⁺).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreForm {
    /// `Φ = φ₋(e⁻) + φ₊(e⁺)`.
    Additive,
    /// `Φ = φ(τe⁻ + (1−τ)e⁺) + φ₊(e⁺)`.
    RevelationPlus,
    /// `Φ = φ(τe⁻ + (1−τ)e⁺) + φ₋(e⁻)`.
    RevelationMinus,
}

impl ScoreForm {
    pub fn name(self) -> &'static str {
        match self {
            ScoreForm::Additive => "additive",
            ScoreForm::RevelationPlus => "revelation_plus",
            ScoreForm::RevelationMinus => "revelation_minus",
        }
    }
}

impl std::str::FromStr for ScoreForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(ScoreForm::Additive),
            "revelation_plus" => Ok(ScoreForm::RevelationPlus),
            "revelation_minus" => Ok(ScoreForm::RevelationMinus),
            other => Err(Error::config(format!("unknown score form '{other}'"))),
        }
    }
}

/// A fully specified scoring function for the composite triplet at level `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSpec {
    pub form: ScoreForm,
    pub phi: Option<PhiIndex>,
    pub phi_minus: Option<PhiIndex>,
    pub phi_plus: Option<PhiIndex>,
    /// `g(y) = g_scale · y`; zero means constant `g`.
    pub g_scale: f64,
    pub tau: f64,
}

impl ScoreSpec {
    pub fn additive(tau: f64, phi_minus: PhiIndex, phi_plus: PhiIndex, g_scale: f64) -> Result<Self> {
        let spec = ScoreSpec {
            form: ScoreForm::Additive,
            phi: None,
            phi_minus: Some(phi_minus),
            phi_plus: Some(phi_plus),
            g_scale,
            tau,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn revelation_plus(tau: f64, phi: PhiIndex, phi_plus: PhiIndex, g_scale: f64) -> Result<Self> {
        let spec = ScoreSpec {
            form: ScoreForm::RevelationPlus,
            phi: Some(phi),
            phi_minus: None,
            phi_plus: Some(phi_plus),
            g_scale,
            tau,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn revelation_minus(tau: f64, phi: PhiIndex, phi_minus: PhiIndex, g_scale: f64) -> Result<Self> {
        let spec = ScoreSpec {
            form: ScoreForm::RevelationMinus,
            phi: Some(phi),
            phi_minus: Some(phi_minus),
            phi_plus: None,
            g_scale,
            tau,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks presence rules, sign constraints and that `G_{e⁻,e⁺}` is strictly increasing.
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        if !(self.g_scale >= 0.0 && self.g_scale.is_finite()) {
            return Err(Error::domain(format!("g_scale must be >= 0, got {}", self.g_scale)));
        }
        let (need_phi, need_minus, need_plus) = match self.form {
            ScoreForm::Additive => (false, true, true),
            ScoreForm::RevelationPlus => (true, false, true),
            ScoreForm::RevelationMinus => (true, true, false),
        };
        let present = |slot: &Option<PhiIndex>, needed: bool, name: &str| -> Result<()> {
            match (slot, needed) {
                (Some(idx), true) => idx.validate(),
                (None, true) => Err(Error::domain(format!(
                    "{} score requires {name}",
                    self.form.name()
                ))),
                (Some(_), false) => Err(Error::domain(format!(
                    "{} score does not use {name}",
                    self.form.name()
                ))),
                (None, false) => Ok(()),
            }
        };
        present(&self.phi, need_phi, "phi")?;
        present(&self.phi_minus, need_minus, "phi_minus")?;
        present(&self.phi_plus, need_plus, "phi_plus")?;
        if let Some(m) = self.phi_minus {
            if !(m.b > 1.0) {
                return Err(Error::domain(format!("phi_minus needs b > 1, got {}", m.b)));
            }
        }
        if let Some(p) = self.phi_plus {
            if !(p.b < 1.0) {
                return Err(Error::domain(format!("phi_plus needs b < 1, got {}", p.b)));
            }
        }
        // numeric spot check of the slope of G over a wide range of (e⁻, e⁺)
        const PROBES: [f64; 5] = [1e-3, 0.1, 1.0, 10.0, 1e3];
        for &em in &PROBES {
            for &ep in &PROBES {
                let slope = self.g_slope(em, ep);
                if !(slope > 0.0) {
                    return Err(Error::domain(format!(
                        "G is not strictly increasing at (e-, e+) = ({em}, {ep}): slope {slope}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Slope of `G_{e⁻,e⁺}(v) = g(v) + ∂₁Φ v/τ − ∂₂Φ v/(1−τ)` (linear in `v`).
    pub fn g_slope(&self, e_minus: f64, e_plus: f64) -> f64 {
        let tau = self.tau;
        let mut slope = self.g_scale;
        if let Some(m) = self.phi_minus {
            slope += m.first(e_minus) / tau;
        }
        if let Some(p) = self.phi_plus {
            slope -= p.first(e_plus) / (1.0 - tau);
        }
        slope
    }
}

/// A prediction of (ES⁻_τ, q_τ, ES⁺_τ) with `e_minus ≤ v ≤ e_plus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeTriplet {
    pub e_minus: f64,
    pub v: f64,
    pub e_plus: f64,
}

impl CompositeTriplet {
    pub fn new(e_minus: f64, v: f64, e_plus: f64) -> Result<Self> {
        let t = CompositeTriplet { e_minus, v, e_plus };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let CompositeTriplet { e_minus, v, e_plus } = *self;
        if !(e_minus > 0.0 && v > 0.0 && e_plus > 0.0) || !e_plus.is_finite() {
            return Err(Error::domain(format!(
                "triplet components must be positive and finite, got ({e_minus}, {v}, {e_plus})"
            )));
        }
        if !(e_minus <= v && v <= e_plus) {
            return Err(Error::domain(format!(
                "triplet violates e- <= v <= e+: ({e_minus}, {v}, {e_plus})"
            )));
        }
        Ok(())
    }

    /// `τ e⁻ + (1−τ) e⁺`, the implied mean.
    pub fn mean(&self, tau: f64) -> f64 {
        tau * self.e_minus + (1.0 - tau) * self.e_plus
    }
}

/// Composite score `L(y; e⁻, v, e⁺)` under `spec`.
pub fn composite_score(y: f64, t: &CompositeTriplet, spec: &ScoreSpec) -> Result<f64> {
    spec.validate()?;
    t.validate()?;
    if !(y > 0.0) {
        return Err(Error::domain(format!("response must be positive, got {y}")));
    }
    Ok(composite_score_raw(y, t.e_minus, t.v, t.e_plus, spec))
}

/// Sample average of [`composite_score`] for each of several triplets; the
/// spec is validated once, which makes grid searches affordable.
pub fn mean_composite_scores(sample: &[f64], triplets: &[CompositeTriplet], spec: &ScoreSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if sample.is_empty() {
        return Err(Error::domain("empty sample"));
    }
    if let Some(y) = sample.iter().find(|y| !(**y > 0.0)) {
        return Err(Error::domain(format!("response must be positive, got {y}")));
    }
    let n = sample.len() as f64;
    triplets
        .iter()
        .map(|t| {
            t.validate()?;
            let total: f64 = sample
                .iter()
                .map(|&y| composite_score_raw(y, t.e_minus, t.v, t.e_plus, spec))
                .sum();
            Ok(total / n)
        })
        .collect()
}

/// Unchecked evaluation; callers guarantee a validated spec and positive arguments.
pub(crate) fn composite_score_raw(y: f64, e_minus: f64, v: f64, e_plus: f64, spec: &ScoreSpec) -> f64 {
    let tau = spec.tau;
    let (s_minus, s_plus) = s_pair_raw(y, v, tau);
    let mut loss = spec.g_scale * pinball_raw(y, v, tau);
    // φ'(e)(e + S⁻/τ) − φ(e) + φ(y) = L_φ(y; e) + φ'(e)(y + S⁻/τ), likewise for the upper part
    if let Some(m) = spec.phi_minus {
        loss += m.bregman(y, e_minus) + m.first(e_minus) * (y + s_minus / tau);
    }
    if let Some(p) = spec.phi_plus {
        loss += p.bregman(y, e_plus) + p.first(e_plus) * (y - s_plus / (1.0 - tau));
    }
    if let Some(phi) = spec.phi {
        let mean = tau * e_minus + (1.0 - tau) * e_plus;
        loss += phi.bregman(y, mean);
    }
    loss
}

/// `(∂L/∂e⁻, ∂L/∂v, ∂L/∂e⁺)`. At `v = y` the branch `1{y ≤ v} = 1` is used.
pub fn composite_score_gradient(y: f64, t: &CompositeTriplet, spec: &ScoreSpec) -> Result<(f64, f64, f64)> {
    spec.validate()?;
    t.validate()?;
    if !(y > 0.0) {
        return Err(Error::domain(format!("response must be positive, got {y}")));
    }
    Ok(composite_gradient_raw(y, t.e_minus, t.v, t.e_plus, spec))
}

pub(crate) fn composite_gradient_raw(
    y: f64,
    e_minus: f64,
    v: f64,
    e_plus: f64,
    spec: &ScoreSpec,
) -> (f64, f64, f64) {
    let tau = spec.tau;
    let (s_minus, s_plus) = s_pair_raw(y, v, tau);
    let below = indicator(y <= v);
    let mut d_em = 0.0;
    let mut d_ep = 0.0;
    if let Some(m) = spec.phi_minus {
        d_em += m.second(e_minus) * (e_minus + s_minus / tau);
    }
    if let Some(p) = spec.phi_plus {
        d_ep += p.second(e_plus) * (e_plus - s_plus / (1.0 - tau));
    }
    if let Some(phi) = spec.phi {
        let mean = tau * e_minus + (1.0 - tau) * e_plus;
        let d_mean = phi.second(mean) * (mean - y);
        d_em += tau * d_mean;
        d_ep += (1.0 - tau) * d_mean;
    }
    let d_v = (below - tau) * spec.g_slope(e_minus, e_plus);
    (d_em, d_v, d_ep)
}
