//! ARMA(p, q) on raw wind speeds: conditional least squares with BIC order selection.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::least_squares;
use crate::error::{Error, Result};
use crate::stats::norm_ppf;

pub const MIN_HISTORY: usize = 30;
const MAX_MA_ITER: usize = 50;
const MA_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub p: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub intercept: f64,
    pub noise_var: f64,
    pub bic: f64,
}

impl ArmaModel {
    fn n_params(&self) -> usize {
        self.p + self.q + 1
    }

    /// Residuals over `y`, zero before the first index with a full lag window.
    pub fn residuals(&self, y: &[f64]) -> Vec<f64> {
        let start = self.p.max(self.q);
        let mut e = vec![0.0; y.len()];
        for t in start..y.len() {
            e[t] = y[t] - self.conditional_mean(y, &e, t);
        }
        e
    }

    fn conditional_mean(&self, y: &[f64], e: &[f64], t: usize) -> f64 {
        let mut m = self.intercept;
        for (i, phi) in self.ar.iter().enumerate() {
            m += phi * y[t - 1 - i];
        }
        for (j, theta) in self.ma.iter().enumerate() {
            m += theta * e[t - 1 - j];
        }
        m
    }

    /// One-step Gaussian predictive mean and standard deviation after `history`.
    pub fn predictive(&self, history: &[f64]) -> (f64, f64) {
        let n = history.len();
        let e = if self.q > 0 { self.residuals(history) } else { Vec::new() };
        let mut m = self.intercept;
        for (i, phi) in self.ar.iter().enumerate() {
            m += phi * history[n - 1 - i];
        }
        for (j, theta) in self.ma.iter().enumerate() {
            m += theta * e[n - 1 - j];
        }
        (m, self.noise_var.sqrt())
    }
}

fn design_row(y: &[f64], e: &[f64], t: usize, p: usize, q: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + p + q);
    row.push(1.0);
    row.extend((1..=p).map(|i| y[t - i]));
    row.extend((1..=q).map(|j| e[t - j]));
    row
}

fn regress(y: &[f64], e: &[f64], start: usize, p: usize, q: usize) -> Option<Vec<f64>> {
    let rows = y.len() - start;
    let k = 1 + p + q;
    let mut x = DMatrix::zeros(rows, k);
    for (r, t) in (start..y.len()).enumerate() {
        for (c, v) in design_row(y, e, t, p, q).into_iter().enumerate() {
            x[(r, c)] = v;
        }
    }
    let target = DVector::from_iterator(rows, y[start..].iter().copied());
    least_squares(&x, &target).map(|b| b.iter().copied().collect())
}

fn model_from(beta: &[f64], p: usize, q: usize) -> ArmaModel {
    ArmaModel {
        p,
        q,
        intercept: beta[0],
        ar: beta[1..=p].to_vec(),
        ma: beta[p + 1..].to_vec(),
        noise_var: f64::NAN,
        bic: f64::NAN,
    }
}

/// Fits one (p, q) on observations from `start` on; `start` is shared by all candidates
/// so their BIC values are comparable.
fn fit_order(y: &[f64], start: usize, p: usize, q: usize, seed_resid: &[f64]) -> Option<ArmaModel> {
    let mut model;
    if q == 0 {
        model = model_from(&regress(y, seed_resid, start, p, 0)?, p, 0);
    } else {
        let mut e = seed_resid.to_vec();
        let mut beta = regress(y, &e, start, p, q)?;
        let mut converged = false;
        for _ in 0..MAX_MA_ITER {
            let m = model_from(&beta, p, q);
            e = m.residuals(y);
            if e.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
                return None;
            }
            let next = regress(y, &e, start, p, q)?;
            let change = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            beta = next;
            if change < MA_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }
        model = model_from(&beta, p, q);
    }
    let e = model.residuals(y);
    let n_eff = (y.len() - start) as f64;
    let rss: f64 = e[start..].iter().map(|v| v * v).sum();
    if !(rss.is_finite() && rss > 0.0) {
        return None;
    }
    model.noise_var = rss / n_eff;
    model.bic = n_eff * (rss / n_eff).ln() + model.n_params() as f64 * n_eff.ln();
    Some(model)
}

/// Long-autoregression residuals used to seed the MA iterations.
fn seed_residuals(y: &[f64], order: usize) -> Vec<f64> {
    let zeros = vec![0.0; y.len()];
    match regress(y, &zeros, order, order, 0) {
        Some(beta) => model_from(&beta, order, 0).residuals(y),
        None => zeros,
    }
}

/// Selects orders over {0..max_order}^2 minus (0,0) by BIC = n ln(RSS/n) + k ln n.
///
/// Candidates whose MA iteration does not converge are dropped with a warning,
/// leaving the pure AR candidates. Ties go to fewer parameters, then smaller p.
pub fn fit_arma(history: &[f64], max_order: usize) -> Result<ArmaModel> {
    if history.len() < MIN_HISTORY {
        return Err(Error::TooShort { needed: MIN_HISTORY, got: history.len() });
    }
    if max_order == 0 {
        return Err(Error::InvalidArgument("max_order must be at least 1".into()));
    }
    let long_order = (2 * max_order).max(4).min(history.len() / 4);
    let start = max_order.max(long_order);
    if history.len() <= start + 2 * max_order + 2 {
        return Err(Error::TooShort { needed: start + 2 * max_order + 3, got: history.len() });
    }
    let seed = seed_residuals(history, long_order);
    let orders: Vec<(usize, usize)> =
        (0..=max_order).flat_map(|p| (0..=max_order).map(move |q| (p, q))).filter(|&o| o != (0, 0)).collect();
    let fits: Vec<((usize, usize), Option<ArmaModel>)> =
        orders.par_iter().map(|&(p, q)| ((p, q), fit_order(history, start, p, q, &seed))).collect();
    let failed: Vec<_> = fits.iter().filter(|(_, m)| m.is_none()).map(|(o, _)| *o).collect();
    if !failed.is_empty() {
        log::debug!("ARMA candidates {failed:?} did not converge and were dropped");
    }
    fits.into_iter()
        .filter_map(|(_, m)| m)
        .min_by(|a, b| a.bic.total_cmp(&b.bic).then(a.n_params().cmp(&b.n_params())).then(a.p.cmp(&b.p)))
        .ok_or_else(|| Error::Estimation("no ARMA candidate could be fitted".into()))
}

/// Pure AR(p), p in 0..=max_ar, by conditional least squares and BIC.
/// Returns (intercept, ar coefficients).
pub fn fit_ar_by_bic(history: &[f64], max_ar: usize) -> Result<(f64, Vec<f64>)> {
    let start = max_ar;
    if history.len() <= start + max_ar + 2 {
        return Err(Error::TooShort { needed: start + max_ar + 3, got: history.len() });
    }
    let zeros = vec![0.0; history.len()];
    (0..=max_ar)
        .filter_map(|p| fit_order(history, start, p, 0, &zeros))
        .min_by(|a, b| a.bic.total_cmp(&b.bic).then(a.p.cmp(&b.p)))
        .map(|m| (m.intercept, m.ar))
        .ok_or_else(|| Error::Estimation("no AR candidate could be fitted".into()))
}

/// alpha-quantile of the Gaussian one-step predictive speed, floored.
pub fn arma_quantile_forecast(model: &ArmaModel, history: &[f64], alpha: f64, speed_floor: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must be in (0,1)")));
    }
    let (m, s) = model.predictive(history);
    Ok(gaussian_quantile(m, s, alpha).max(speed_floor))
}

pub(crate) fn gaussian_quantile(mean: f64, sd: f64, alpha: f64) -> f64 {
    if alpha == 0.5 || sd == 0.0 {
        mean
    } else {
        mean + sd * norm_ppf(alpha)
    }
}
