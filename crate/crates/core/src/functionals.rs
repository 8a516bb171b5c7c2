//! Empirical and closed-form computation of the composite triplet.
//!
//! Includes a grid-search route to the expected shortfalls (minimizing the
//! mean of `S⁻`/`S⁺`) that serves as an independent check of the order
//! statistic formulas, and the gamma-model triplet built on a self-contained
//! regularized incomplete gamma function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{check_tau, s_pair_raw, CompositeTriplet};

/// The closed interval `{t : F(t−) ≤ τ ≤ F(t)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSet {
    pub lower: f64,
    pub upper: f64,
}

impl QuantileSet {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Distance from `x` to the interval (zero inside).
    pub fn distance(&self, x: f64) -> f64 {
        if x < self.lower {
            self.lower - x
        } else if x > self.upper {
            x - self.upper
        } else {
            0.0
        }
    }
}

fn sorted_sample(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::domain("empty sample"));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("sample contains non-finite values"));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    Ok(xs)
}

/// Quantile set of the empirical distribution of `sample` at level `tau`.
pub fn empirical_quantile_set(sample: &[f64], tau: f64) -> Result<QuantileSet> {
    check_tau(tau)?;
    let xs = sorted_sample(sample)?;
    let n = xs.len() as f64;
    // smallest order statistic k (1-based) with k/n >= τ; division keeps k/n == τ exact when it is
    let k = (1..=xs.len())
        .find(|&k| k as f64 / n >= tau)
        .expect("k = n always satisfies k/n >= tau");
    let lower = xs[k - 1];
    // F_n(lower) counts ties at lower
    let count_le = xs.partition_point(|&x| x <= lower);
    let upper = if count_le as f64 / n == tau {
        xs[count_le]
    } else {
        lower
    };
    Ok(QuantileSet { lower, upper })
}

/// `(ES⁻_τ, ES⁺_τ)` of the empirical distribution, integrating the empirical
/// quantile function exactly (fractional weight on the straddling order statistic).
pub fn empirical_es(sample: &[f64], tau: f64) -> Result<(f64, f64)> {
    check_tau(tau)?;
    let xs = sorted_sample(sample)?;
    let n = xs.len();
    let m = tau * n as f64;
    let mut lower_int = 0.0;
    let mut upper_int = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        // F_n^{-1} equals x on the p-interval (i/n, (i+1)/n]
        let lo = i as f64;
        let hi = lo + 1.0;
        let below = (hi.min(m) - lo).clamp(0.0, 1.0);
        lower_int += below * x;
        upper_int += (1.0 - below) * x;
    }
    let nf = n as f64;
    Ok((lower_int / (nf * tau), upper_int / (nf * (1.0 - tau))))
}

/// Regular grid `lo, lo + step, …` used by the brute-force minimization oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::domain(format!("invalid grid [{lo}, {hi}] step {step}")));
        }
        Ok(GridSpec { lo, hi, step })
    }

    /// Smallest grid aligned to integer multiples of `step` that covers `[min, max]` of the sample.
    pub fn covering(sample: &[f64], step: f64) -> Result<Self> {
        let xs = sorted_sample(sample)?;
        let lo = (xs[0] / step).floor() * step;
        let hi = (xs[xs.len() - 1] / step).ceil() * step;
        GridSpec::new(lo, hi, step)
    }

    pub fn points(&self) -> Vec<f64> {
        let start = (self.lo / self.step).round();
        let aligned = (start * self.step - self.lo).abs() < 1e-9 * self.step.max(self.lo.abs());
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| {
                if aligned {
                    (start + k as f64) * self.step
                } else {
                    self.lo + k as f64 * self.step
                }
            })
            .collect()
    }
}

/// Expected shortfalls via `ES⁻ = −min_v E[S⁻(Y; v)]/τ` and `ES⁺ = min_v E[S⁺(Y; v)]/(1−τ)`,
/// with the minimum taken over `grid`.
pub fn es_via_minimization(sample: &[f64], tau: f64, grid: &GridSpec) -> Result<(f64, f64)> {
    check_tau(tau)?;
    let xs = sorted_sample(sample)?;
    let tol = 1e-9 * grid.step;
    if grid.lo > xs[0] + tol || grid.hi < xs[xs.len() - 1] - tol {
        return Err(Error::domain(format!(
            "grid [{}, {}] does not cover sample range [{}, {}]",
            grid.lo,
            grid.hi,
            xs[0],
            xs[xs.len() - 1]
        )));
    }
    let n = xs.len() as f64;
    let mut best_minus = f64::INFINITY;
    let mut best_plus = f64::INFINITY;
    for v in grid.points() {
        let (mut sm, mut sp) = (0.0, 0.0);
        for &y in &xs {
            let (a, b) = s_pair_raw(y, v, tau);
            sm += a;
            sp += b;
        }
        best_minus = best_minus.min(sm / n);
        best_plus = best_plus.min(sp / n);
    }
    Ok((-best_minus / tau, best_plus / (1.0 - tau)))
}

/// Gamma distribution parametrized by its mean and shape; scale is `mu / gamma_shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub mu: f64,
    pub gamma_shape: f64,
}

impl GammaParams {
    pub fn new(mu: f64, gamma_shape: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite() && gamma_shape > 0.0 && gamma_shape.is_finite()) {
            return Err(Error::domain(format!(
                "gamma parameters must be positive, got mu = {mu}, shape = {gamma_shape}"
            )));
        }
        Ok(GammaParams { mu, gamma_shape })
    }

    pub fn scale(&self) -> f64 {
        self.mu / self.gamma_shape
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            regularized_gamma_p(self.gamma_shape, x / self.scale())
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_tau(p)?;
        Ok(self.scale() * standard_gamma_quantile(self.gamma_shape, p))
    }
}

/// Closed-form `(ES⁻_τ, q_τ, ES⁺_τ)` of the gamma distribution.
///
/// The truncated first moments use the gamma CDF with shape `γ + 1` and the
/// same scale `μ/γ`.
pub fn gamma_triplet(p: &GammaParams, tau: f64) -> Result<CompositeTriplet> {
    check_tau(tau)?;
    let p = GammaParams::new(p.mu, p.gamma_shape)?;
    let z = standard_gamma_quantile(p.gamma_shape, tau);
    let (lower, upper) = regularized_gamma_pq(p.gamma_shape + 1.0, z);
    let v = p.scale() * z;
    let e_minus = p.mu * lower / tau;
    let e_plus = p.mu * upper / (1.0 - tau);
    CompositeTriplet::new(e_minus, v, e_plus)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

const INCGAMMA_MAX_ITER: usize = 1000;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    regularized_gamma_pq(a, x).0
}

/// `(P(a, x), Q(a, x))`; series below `a + 1`, continued fraction above.
pub fn regularized_gamma_pq(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..INCGAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * f64::EPSILON {
                break;
            }
        }
        let p = (sum.ln() + log_prefactor).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        // modified Lentz
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=INCGAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < f64::EPSILON {
                break;
            }
        }
        let q = (h.ln() + log_prefactor).exp().min(1.0);
        (1.0 - q, q)
    }
}

/// Quantile of the unit-scale gamma distribution with shape `a`.
///
/// Bracketing followed by safeguarded Newton iterations.
pub fn standard_gamma_quantile(a: f64, p: f64) -> f64 {
    debug_assert!(a > 0.0 && p > 0.0 && p < 1.0);
    let mut lo = 0.0_f64;
    let mut hi = a.max(1.0);
    while regularized_gamma_p(a, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    let log_norm = ln_gamma(a);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = regularized_gamma_p(a, x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = ((a - 1.0) * x.ln() - x - log_norm).exp();
        let newton = x - f / density;
        let next = if density > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-14 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}
