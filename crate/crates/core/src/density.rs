//! Closed-form log-normal predictive density of power.
//!
//! With P(t) = F(t, S(t)) + e(t), Ito's lemma applied to the GBM speed gives power
//! itself a GBM form with drift and volatility
//!
//! ```text
//! mu_P    = (F_t + mu_S S F_S + 0.5 sigma_S^2 S^2 F_SS) / P
//! sigma_P = sqrt(sigma_S^2 S^2 F_S^2 + sigma_F^2 F_S) / P
//! ```
//!
//! so ln P(t+dt) ~ N(ln P + (mu_P - sigma_P^2 / 2) dt, sigma_P^2 dt).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_curve::CurveEvaluation;
use crate::stats;

/// ln X ~ N(mu_prime, sigma_prime^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalDensity {
    pub mu_prime: f64,
    pub sigma_prime: f64,
}

impl LogNormalDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || self.sigma_prime <= 0.0 {
            return 0.0;
        }
        let z = (x.ln() - self.mu_prime) / self.sigma_prime;
        (-0.5 * z * z).exp() / (x * self.sigma_prime * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.sigma_prime <= 0.0 {
            return if x >= self.mu_prime.exp() { 1.0 } else { 0.0 };
        }
        stats::norm_cdf((x.ln() - self.mu_prime) / self.sigma_prime)
    }

    /// exp(mu' + sigma' Phi^-1(beta)); beta must lie in (0,1).
    pub fn quantile(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {beta} must be in (0,1)")));
        }
        Ok((self.mu_prime + self.sigma_prime * stats::norm_ppf(beta)).exp())
    }

    pub fn median(&self) -> f64 {
        self.mu_prime.exp()
    }
}

/// GBM drift and volatility of the power process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerDynamics {
    pub mu_p: f64,
    pub sigma_p: f64,
}

/// Drift and volatility of power at speed `s` and current power `p_now`.
///
/// `power_floor` is the smallest admissible `p_now`; callers floor the observed power
/// first. Only the conversion-noise term clamps F_S at zero.
pub fn power_dynamics(
    s: f64,
    p_now: f64,
    mu_s: f64,
    sigma_s2: f64,
    curve: &CurveEvaluation,
    sigma_f: f64,
    power_floor: f64,
) -> Result<PowerDynamics> {
    if !(p_now >= power_floor) {
        return Err(Error::BelowPowerFloor { p_now, floor: power_floor });
    }
    if !(sigma_s2 >= 0.0 && sigma_f >= 0.0) {
        return Err(Error::InvalidArgument("variances must be nonnegative".into()));
    }
    let drift = curve.f_t + mu_s * s * curve.f_s + 0.5 * sigma_s2 * s * s * curve.f_ss;
    let var = sigma_s2 * s * s * curve.f_s * curve.f_s + sigma_f * sigma_f * curve.f_s.max(0.0);
    Ok(PowerDynamics { mu_p: drift / p_now, sigma_p: var.sqrt() / p_now })
}

/// Log-normal density of P(t + delta_t) given P(t) = p_now.
pub fn predictive_power_density(p_now: f64, dynamics: &PowerDynamics, delta_t: f64) -> Result<LogNormalDensity> {
    if !(p_now > 0.0 && p_now.is_finite()) {
        return Err(Error::InvalidArgument(format!("p_now {p_now} must be positive")));
    }
    let PowerDynamics { mu_p, sigma_p } = *dynamics;
    Ok(LogNormalDensity {
        mu_prime: p_now.ln() + (mu_p - 0.5 * sigma_p * sigma_p) * delta_t,
        sigma_prime: sigma_p * delta_t.sqrt(),
    })
}
