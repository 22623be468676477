//! Gamma and Weibull kernels used by the classifier.
//!
//! Joint point-to-patch distances are modelled as Gamma distributed, with
//! shape and scale re-estimated from each patch's members by the closed-form
//! maximum-likelihood approximation. The triangulation uncertainty `d_c` of a
//! point follows a Weibull law whose parameters are fitted once per rig.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Gamma shape `alpha` and scale `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<GammaParams> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma parameters must be positive and finite, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(GammaParams { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha * self.beta
    }

    pub fn variance(&self) -> f64 {
        self.alpha * self.beta * self.beta
    }

    /// `-α·ln β - ln Γ(α)`: the part of the log density that does not
    /// depend on the distance.
    pub fn log_normalizer(&self) -> f64 {
        -self.alpha * self.beta.ln() - ln_gamma(self.alpha)
    }
}

/// Weibull shape `k` and scale `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub k: f64,
    pub lambda: f64,
}

impl WeibullParams {
    pub fn new(k: f64, lambda: f64) -> Result<WeibullParams> {
        let wp = WeibullParams { k, lambda };
        wp.validate()?;
        Ok(wp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > 0.0 && self.lambda > 0.0 && self.k.is_finite() && self.lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "weibull parameters must be positive and finite, got k={}, lambda={}",
                self.k, self.lambda
            )))
        }
    }

    /// `F(d) = (d/λ)^k - (k-1)·ln d`, the distance-dependent part of the
    /// negative log density. Infinite for infinite `d`.
    pub fn penalty(&self, d: f64) -> f64 {
        if d.is_infinite() {
            return f64::INFINITY;
        }
        let d = d.max(crate::DIST_FLOOR);
        (d / self.lambda).powf(self.k) - (self.k - 1.0) * d.ln()
    }

    /// `C₂ = k·ln λ - ln k`.
    pub fn log_constant(&self) -> f64 {
        self.k * self.lambda.ln() - self.k.ln()
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Log density of `Γ(α, β)` at `d > 0`.
pub fn gamma_log_pdf(d: f64, g: GammaParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    Ok((g.alpha - 1.0) * (d / g.beta).ln() - d / g.beta - g.beta.ln() - ln_gamma(g.alpha))
}

/// Moment-matched Gamma approximation of `Γ(γ₁, υ₁) ⊗ Γ(γ₂, w·υ₂)`.
pub fn gamma_sum_approx(g1: GammaParams, g2: GammaParams, w: f64) -> GammaParams {
    let mu = g1.alpha * g1.beta + g2.alpha * w * g2.beta;
    let var = g1.alpha * g1.beta * g1.beta + g2.alpha * w * w * g2.beta * g2.beta;
    GammaParams {
        alpha: mu * mu / var,
        beta: var / mu,
    }
}

/// Closed-form approximate maximum-likelihood Gamma fit.
///
/// With `φ = ln(mean d) - mean(ln d)`,
/// `α̂ = (3 - φ + √((φ-3)² + 24φ)) / (12φ)` and `β̂ = mean(d) / α̂`.
pub fn gamma_mle(distances: &[f64]) -> Result<GammaParams> {
    let n = distances.len();
    if n < 2 {
        return Err(Error::NotEnoughData(format!("gamma fit needs 2 samples, got {n}")));
    }
    let mut sum = 0.0;
    let mut sum_ln = 0.0;
    for &d in distances {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NonPositiveDistance(d));
        }
        sum += d;
        sum_ln += d.ln();
    }
    let mean = sum / n as f64;
    let phi = mean.ln() - sum_ln / n as f64;
    if !(phi > 1e-12) {
        return Err(Error::DegenerateSample);
    }
    let alpha = (3.0 - phi + ((phi - 3.0).powi(2) + 24.0 * phi).sqrt()) / (12.0 * phi);
    GammaParams::new(alpha, sum / (alpha * n as f64))
}

pub fn gamma_log_likelihood(samples: &[f64], g: GammaParams) -> f64 {
    samples
        .iter()
        .map(|&d| gamma_log_pdf(d, g).unwrap_or(f64::NEG_INFINITY))
        .sum()
}

/// Log density of the Weibull law at `d ≥ 0`.
pub fn weibull_log_pdf(d: f64, wp: WeibullParams) -> Result<f64> {
    wp.validate()?;
    if d < 0.0 || d.is_nan() {
        return Err(Error::NonPositiveDistance(d));
    }
    let r = d / wp.lambda;
    Ok((wp.k / wp.lambda).ln() + (wp.k - 1.0) * r.ln() - r.powf(wp.k))
}

pub fn weibull_log_likelihood(samples: &[f64], wp: WeibullParams) -> f64 {
    samples
        .iter()
        .map(|&d| weibull_log_pdf(d, wp).unwrap_or(f64::NEG_INFINITY))
        .sum()
}

/// Maximum-likelihood Weibull fit.
///
/// The shape solves the profile equation
/// `Σ xᵏ ln x / Σ xᵏ - 1/k - mean(ln x) = 0` by safeguarded Newton steps;
/// the scale follows as `λ = (mean xᵏ)^(1/k)`. Zero samples are lifted to
/// [`crate::DIST_FLOOR`].
pub fn weibull_fit(samples: &[f64]) -> Result<WeibullParams> {
    if samples.len() < 10 {
        return Err(Error::NotEnoughData(format!(
            "weibull fit needs 10 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidParameter(
            "weibull samples must be finite and non-negative".into(),
        ));
    }
    let floored: Vec<f64> = samples.iter().map(|x| x.max(crate::DIST_FLOOR)).collect();
    let max = floored.iter().copied().fold(0.0_f64, f64::max);
    // Work on x / max so that powers stay in (0, 1].
    let logs: Vec<f64> = floored.iter().map(|x| (x / max).ln()).collect();
    let n = logs.len() as f64;
    let mean_log = logs.iter().sum::<f64>() / n;
    if mean_log > -1e-12 {
        return Err(Error::DegenerateSample);
    }

    // Returns (g(k), g'(k)).
    let profile = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &logs {
            let p = (k * l).exp();
            s0 += p;
            s1 += p * l;
            s2 += p * l * l;
        }
        let m1 = s1 / s0;
        let g = m1 - 1.0 / k - mean_log;
        let dg = s2 / s0 - m1 * m1 + 1.0 / (k * k);
        (g, dg)
    };

    let mut lo = 1.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while profile(lo).0 > 0.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 200 {
            return Err(Error::WeibullFitFailed);
        }
    }
    while profile(hi).0 < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::WeibullFitFailed);
        }
    }
    let mut k = 0.5 * (lo + hi);
    let mut converged = false;
    for _ in 0..100 {
        let (g, dg) = profile(k);
        if g == 0.0 {
            converged = true;
            break;
        }
        if g < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let newton = k - g / dg;
        let next = if dg > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - k).abs() <= 1e-14 * k || hi - lo <= 1e-14 * k {
            k = next;
            converged = true;
            break;
        }
        k = next;
    }
    if !converged {
        return Err(Error::WeibullFitFailed);
    }
    let mean_pow = logs.iter().map(|l| (k * l).exp()).sum::<f64>() / n;
    WeibullParams::new(k, max * mean_pow.powf(1.0 / k))
}
