//! AR(p) mean with GARCH(1,1) conditional variance, fitted by Gaussian maximum likelihood.

use serde::{Deserialize, Serialize};

use super::arma::fit_ar_by_bic;
use super::optim::{nelder_mead, SimplexOptions};
use crate::error::{Error, Result};

pub const MIN_HISTORY: usize = 100;
const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub a1: f64,
    pub b1: f64,
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl GarchParams {
    /// omega = exp(u0); a1 + b1 = logistic(u1) < 1; a1 = (a1 + b1) logistic(u2).
    fn from_unconstrained(u: &[f64]) -> Self {
        let persistence = logistic(u[1]);
        let share = logistic(u[2]);
        Self { omega: u[0].clamp(-700.0, 700.0).exp(), a1: persistence * share, b1: persistence * (1.0 - share) }
    }

    fn to_unconstrained(self) -> [f64; 3] {
        let persistence = self.a1 + self.b1;
        [self.omega.ln(), logit(persistence), logit(self.a1 / persistence)]
    }

    /// Conditional variances h_0..h_n for residuals e_0..e_{n-1}; h_n is the next-step variance.
    pub fn conditional_variances(&self, resid: &[f64], h0: f64) -> Vec<f64> {
        let mut h = Vec::with_capacity(resid.len() + 1);
        h.push(h0);
        for (t, e) in resid.iter().enumerate() {
            h.push(self.omega + self.a1 * e * e + self.b1 * h[t]);
        }
        h
    }

    /// Gaussian negative log-likelihood up to constants.
    pub fn neg_log_likelihood(&self, resid: &[f64], h0: f64) -> f64 {
        let mut h = h0;
        let mut nll = 0.0;
        for e in resid {
            if !(h > 0.0) {
                return f64::INFINITY;
            }
            nll += 0.5 * (h.ln() + e * e / h);
            h = self.omega + self.a1 * e * e + self.b1 * h;
        }
        nll
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArGarchModel {
    pub ar: Vec<f64>,
    pub intercept: f64,
    pub garch: GarchParams,
    /// Variance used to start the recursion (sample variance of the fit residuals).
    pub h0: f64,
    pub last_resid: f64,
    /// Conditional variance for the step after the fit history.
    pub last_condvar: f64,
}

impl ArGarchModel {
    fn mean_residuals(&self, y: &[f64]) -> Vec<f64> {
        let p = self.ar.len();
        (p..y.len())
            .map(|t| {
                let m: f64 = self.intercept + self.ar.iter().enumerate().map(|(i, phi)| phi * y[t - 1 - i]).sum::<f64>();
                y[t] - m
            })
            .collect()
    }

    /// One-step Gaussian predictive mean and standard deviation after `history`.
    pub fn predictive(&self, history: &[f64]) -> (f64, f64) {
        let n = history.len();
        let resid = self.mean_residuals(history);
        let h = self.garch.conditional_variances(&resid, self.h0);
        let m = self.intercept + self.ar.iter().enumerate().map(|(i, phi)| phi * history[n - 1 - i]).sum::<f64>();
        (m, h[h.len() - 1].sqrt())
    }
}

const STARTS: [(f64, f64); 4] = [(0.05, 0.90), (0.10, 0.80), (0.20, 0.50), (0.03, 0.30)];

/// Fits the GARCH(1,1) part on mean-equation residuals, falling back to a constant
/// variance when the ARCH/GARCH terms do not improve BIC.
pub fn fit_garch11(resid: &[f64]) -> Result<(GarchParams, f64)> {
    let n = resid.len() as f64;
    let var = resid.iter().map(|e| e * e).sum::<f64>() / n;
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Estimation("residual variance is zero or non-finite".into()));
    }
    let opts = SimplexOptions { initial_step: 0.5, f_tol: 1e-10, max_iter: 3000 };
    let mut best: Option<(GarchParams, f64)> = None;
    for &(a, b) in &STARTS {
        let start = GarchParams { omega: var * (1.0 - a - b), a1: a, b1: b }.to_unconstrained();
        let res = nelder_mead(|u| GarchParams::from_unconstrained(u).neg_log_likelihood(resid, var), &start, opts);
        if res.value.is_finite() && best.is_none_or(|(_, v)| res.value < v) {
            best = Some((GarchParams::from_unconstrained(&res.x), res.value));
        }
    }
    let (garch, nll) = best.ok_or_else(|| {
        Error::Estimation(format!("GARCH likelihood non-finite from every start (a1, b1) in {STARTS:?}"))
    })?;
    // a1 and b1 must pay their BIC cost against constant variance. Without this, b1 is
    // unidentified when a1 is near zero and drifts towards 1 on homoskedastic data.
    let constant = GarchParams { omega: var, a1: 0.0, b1: 0.0 };
    let nll_constant = constant.neg_log_likelihood(resid, var);
    if nll_constant - nll <= n.ln() {
        return Ok((constant, var));
    }
    Ok((garch, var))
}

/// AR order by BIC on the mean equation, then GARCH(1,1) on its residuals.
pub fn fit_ar_garch(history: &[f64], max_ar: usize) -> Result<ArGarchModel> {
    if history.len() < MIN_HISTORY {
        return Err(Error::TooShort { needed: MIN_HISTORY, got: history.len() });
    }
    let (intercept, ar) = fit_ar_by_bic(history, max_ar)?;
    let mut model = ArGarchModel {
        ar,
        intercept,
        garch: GarchParams { omega: 1.0, a1: 0.0, b1: 0.0 },
        h0: 1.0,
        last_resid: 0.0,
        last_condvar: 1.0,
    };
    let resid = model.mean_residuals(history);
    let (garch, h0) = fit_garch11(&resid)?;
    let h = garch.conditional_variances(&resid, h0);
    model.garch = garch;
    model.h0 = h0;
    model.last_resid = *resid.last().unwrap_or(&0.0);
    model.last_condvar = h[h.len() - 1];
    Ok(model)
}
