//! Online kernel power curve.
//!
//! Each observation (s, p) appends a Gaussian-kernel center at s. Its multiplier solves
//!
//! ```text
//! min 0.5 ||w - w_prev||^2 + 0.5 gamma e^2   s.t.   p = <w, phi(s)> + e
//! ```
//!
//! whose KKT conditions give w = w_prev + lambda phi(s) and e = lambda / gamma, hence
//! lambda = (p - F_prev(s)) / (k(s, s) + 1 / gamma). The feature map phi is never
//! materialized; the curve is F(s) = sum_i lambda_i k(s, c_i).

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::stats;

/// Gaussian kernel exp(-(s1 - s2)^2 / (2 delta)).
pub fn kernel(s1: f64, s2: f64, delta: f64) -> f64 {
    let d = s1 - s2;
    (-(d * d) / (2.0 * delta)).exp()
}

/// Multiplier of a new center given the prediction residual at its speed.
pub fn kaal_multiplier(residual: f64, self_kernel: f64, gamma: f64) -> f64 {
    residual / (self_kernel + 1.0 / gamma)
}

/// Curve value and derivatives at one speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveEvaluation {
    pub f: f64,
    /// Change attributable to the most recent update, per step.
    pub f_t: f64,
    pub f_s: f64,
    pub f_ss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastUpdate {
    pub center: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurveModel {
    pub centers: VecDeque<f64>,
    pub lambdas: VecDeque<f64>,
    /// Kernel bandwidth, (m/s)^2.
    pub delta: f64,
    pub gamma: f64,
    /// Dictionary budget; the oldest center is evicted beyond it.
    pub window: usize,
    /// Conversion-noise scale.
    pub sigma_f: f64,
    pub delta_t: f64,
    pub last: Option<LastUpdate>,
}

impl PowerCurveModel {
    pub fn new(delta: f64, gamma: f64, window: usize, delta_t: f64) -> Result<Self> {
        if !(delta > 0.0 && gamma > 0.0 && delta_t > 0.0) || window == 0 {
            return Err(Error::InvalidArgument("delta, gamma, delta_t and window must be positive".into()));
        }
        Ok(Self {
            centers: VecDeque::new(),
            lambdas: VecDeque::new(),
            delta,
            gamma,
            window,
            sigma_f: 0.0,
            delta_t,
            last: None,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Curve value only; zero for an empty dictionary.
    pub fn value(&self, s: f64) -> f64 {
        self.centers.iter().zip(&self.lambdas).map(|(c, l)| l * kernel(s, *c, self.delta)).sum()
    }

    pub fn evaluate(&self, s: f64) -> Result<CurveEvaluation> {
        if self.is_empty() {
            return Err(Error::EmptyModel);
        }
        let d = self.delta;
        let (mut f, mut f_s, mut f_ss) = (0.0, 0.0, 0.0);
        for (c, l) in self.centers.iter().zip(&self.lambdas) {
            let u = s - c;
            let lk = l * kernel(s, *c, d);
            f += lk;
            f_s += lk * (-u / d);
            f_ss += lk * (u * u / (d * d) - 1.0 / d);
        }
        let f_t = self.last.map_or(0.0, |last| last.lambda * kernel(s, last.center, d) / self.delta_t);
        Ok(CurveEvaluation { f, f_t, f_s, f_ss })
    }

    /// Absorbs one observation and returns the new multiplier.
    pub fn update(&mut self, s: f64, p: f64) -> f64 {
        let residual = p - self.value(s);
        let lambda = kaal_multiplier(residual, kernel(s, s, self.delta), self.gamma);
        self.centers.push_back(s);
        self.lambdas.push_back(lambda);
        while self.centers.len() > self.window {
            self.centers.pop_front();
            self.lambdas.pop_front();
        }
        self.last = Some(LastUpdate { center: s, lambda });
        lambda
    }
}

/// Sample-std estimate of the conversion-noise scale over the training window.
///
/// Increments of observed power minus increments of the fitted curve are
/// standardized by sqrt(F_S dt) at the later speed. Steps with F_S at or below
/// `f_s_floor` are skipped and the divisor shrinks with them.
pub fn estimate_sigma_f(model: &PowerCurveModel, train: &SeriesFrame, f_s_floor: f64) -> Result<f64> {
    if train.len() < 3 {
        return Err(Error::TooShort { needed: 3, got: train.len() });
    }
    let dt = train.delta_t;
    let mut sum_sq = 0.0;
    let mut usable = 0usize;
    let mut prev_f = model.value(train.speed[0]);
    for i in 1..train.len() {
        let ev = model.evaluate(train.speed[i])?;
        let d_power = train.power[i] - train.power[i - 1];
        let d_curve = ev.f - prev_f;
        prev_f = ev.f;
        if ev.f_s <= f_s_floor {
            continue;
        }
        let z = (d_power - d_curve) / (ev.f_s * dt).sqrt();
        sum_sq += z * z;
        usable += 1;
    }
    if usable < 2 {
        return Err(Error::Estimation(format!("only {usable} usable increments for sigma_F")));
    }
    Ok((sum_sq / (usable - 1) as f64).sqrt())
}

fn sequential_fit(speeds: &[f64], powers: &[f64], delta: f64, gamma: f64, window: usize, dt: f64) -> Result<(PowerCurveModel, Vec<f64>)> {
    let mut model = PowerCurveModel::new(delta, gamma, window, dt)?;
    let mut errors = Vec::with_capacity(speeds.len());
    for (&s, &p) in speeds.iter().zip(powers) {
        errors.push(model.value(s) - p);
        model.update(s, p);
    }
    Ok((model, errors))
}

/// Fits the curve over the training pairs starting from F = 0.
///
/// (delta, gamma) is chosen by the RMSE of the one-step prediction F_prev(s_i) - p_i,
/// ignoring the first tenth of the window while the dictionary fills up.
pub fn fit_initial(train: &SeriesFrame, config: &RunConfig) -> Result<PowerCurveModel> {
    if train.len() < 10 {
        return Err(Error::TooShort { needed: 10, got: train.len() });
    }
    let window = config.dictionary_window.unwrap_or(usize::MAX);
    let g = &config.hyper_grid;
    let grid: Vec<(f64, f64)> = g.delta.iter().flat_map(|&d| g.gamma.iter().map(move |&gm| (d, gm))).collect();
    if grid.is_empty() {
        return Err(Error::Config("power curve hyperparameter grid is empty".into()));
    }
    let burn = train.len() / 10;
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&(d, gm)| match sequential_fit(&train.speed, &train.power, d, gm, window, train.delta_t) {
            Ok((_, errs)) => {
                let v = stats::rmse(&errs[burn..]);
                if v.is_finite() { v } else { f64::INFINITY }
            }
            Err(_) => f64::INFINITY,
        })
        .collect();
    let best = (0..grid.len())
        .min_by(|&i, &j| {
            scores[i]
                .total_cmp(&scores[j])
                .then(grid[i].0.total_cmp(&grid[j].0))
                .then(grid[i].1.total_cmp(&grid[j].1))
        })
        .expect("grid is nonempty");
    let (d, gm) = grid[best];
    let (model, _) = sequential_fit(&train.speed, &train.power, d, gm, window, train.delta_t)?;
    Ok(model)
}
