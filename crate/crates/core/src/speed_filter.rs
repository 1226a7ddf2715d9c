//! Dual Kalman filter for the log wind speed.
//!
//! The state is X = ln S, observed through Y = ln WS = X + z with z ~ N(0, sigma_z2).
//! Under the Euler-discretized inhomogeneous GBM the state moves as
//! X(t+dt) = X(t) + A theta + w with A = (dt, -dt/2) and theta = (mu_S, sigma_S^2).
//! theta follows a Gaussian random walk with covariance Q. One filter tracks X given
//! theta, the other tracks theta given X, both driven by the same innovation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::density::LogNormalDensity;
use crate::error::{Error, Result};
use crate::stats;

type Mat2 = [[f64; 2]; 2];

fn mat_add(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

fn mat_vec(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

fn diag(d: [f64; 2]) -> Mat2 {
    [[d[0], 0.0], [0.0, d[1]]]
}

/// Parameter half of the dual filter: theta = (mu_S, sigma_S^2) per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaState {
    pub theta_hat: [f64; 2],
    pub p_theta: Mat2,
    pub q: Mat2,
}

/// Hyperparameters chosen on the training window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterHyper {
    /// Diagonal of Q: (drift, squared volatility).
    pub q_diag: [f64; 2],
    pub sigma_z2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedFilterState {
    /// Posterior log-speed estimate.
    pub x_hat: f64,
    pub p_x: f64,
    pub sigma_z2: f64,
    pub theta: ThetaState,
    /// Fixed design row (dt, -dt/2).
    pub a_row: [f64; 2],
    pub sigma2_min: f64,
}

/// One-step prior produced by [`SpeedFilterState::predict`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedPrediction {
    pub x_prior: f64,
    pub p_x_prior: f64,
    pub theta_prior: [f64; 2],
    pub p_theta_prior: Mat2,
    pub mu_s: f64,
    pub sigma_s2: f64,
    /// exp(x_prior), in m/s.
    pub s_point: f64,
    /// Log-normal density of S(t+dt).
    pub density: LogNormalDensity,
}

/// Log-returns of the training speeds.
fn log_returns(speeds: &[f64], literal_ratio: bool) -> Result<Vec<f64>> {
    let r: Vec<f64> = speeds
        .windows(2)
        .map(|w| if literal_ratio { w[1].ln() / w[0].ln() } else { w[1].ln() - w[0].ln() })
        .collect();
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Estimation("log-returns are not finite (ratio of logs with a speed of 1 m/s?)".into()));
    }
    Ok(r)
}

impl SpeedFilterState {
    /// Initializes the filter from training speeds.
    ///
    /// sigma_S is the sample std of the log-returns (floored at `sigma_floor` for a
    /// flat series) and mu_S = mean(r) + sigma_S^2 / 2.
    pub fn initialize(train_speeds: &[f64], hyper: FilterHyper, config: &RunConfig) -> Result<Self> {
        if train_speeds.len() < 3 {
            return Err(Error::TooShort { needed: 3, got: train_speeds.len() });
        }
        if let Some(i) = train_speeds.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(format!("training speed at index {i} is not positive")));
        }
        if !(hyper.sigma_z2 > 0.0) || hyper.q_diag.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::InvalidArgument("sigma_z2 must be positive and Q nonnegative".into()));
        }
        let r = log_returns(train_speeds, config.literal_ratio_returns)?;
        let mut sigma = stats::sample_std(&r);
        if sigma < config.sigma_floor {
            log::warn!("training log-returns have zero spread; using sigma floor {}", config.sigma_floor);
            sigma = config.sigma_floor;
        }
        let sigma2 = sigma * sigma;
        let mu = stats::mean(&r) + sigma2 / 2.0;
        let dt = config.delta_t;
        let q = diag(hyper.q_diag);
        Ok(Self {
            x_hat: train_speeds[train_speeds.len() - 1].ln(),
            p_x: hyper.sigma_z2,
            sigma_z2: hyper.sigma_z2,
            theta: ThetaState {
                theta_hat: [mu, sigma2.max(config.sigma2_min)],
                p_theta: diag([hyper.q_diag[0] * config.p_theta_scale, hyper.q_diag[1] * config.p_theta_scale]),
                q,
            },
            a_row: [dt, -dt / 2.0],
            sigma2_min: config.sigma2_min,
        })
    }

    pub fn delta_t(&self) -> f64 {
        self.a_row[0]
    }

    /// Parameter and state prediction.
    pub fn predict(&self) -> SpeedPrediction {
        let theta_prior = self.theta.theta_hat;
        let p_theta_prior = mat_add(&self.theta.p_theta, &self.theta.q);
        let a = self.a_row;
        let x_prior = self.x_hat + a[0] * theta_prior[0] + a[1] * theta_prior[1];
        let dt = self.delta_t();
        let sigma_s2 = theta_prior[1];
        let p_x_prior = self.p_x + dt * sigma_s2;
        SpeedPrediction {
            x_prior,
            p_x_prior,
            theta_prior,
            p_theta_prior,
            mu_s: theta_prior[0],
            sigma_s2,
            s_point: x_prior.exp(),
            density: LogNormalDensity { mu_prime: x_prior, sigma_prime: (sigma_s2 * dt).sqrt() },
        }
    }

    /// State and parameter filtering with the measured speed of the predicted step.
    pub fn filter(&mut self, prediction: &SpeedPrediction, observed_speed: f64) -> Result<()> {
        if !(observed_speed.is_finite() && observed_speed > 0.0) {
            return Err(Error::InvalidArgument(format!("observed speed {observed_speed} must be positive")));
        }
        let y = observed_speed.ln();
        let innovation = y - prediction.x_prior;

        let pxp = prediction.p_x_prior;
        let k_x = pxp / (pxp + self.sigma_z2);
        self.x_hat = prediction.x_prior + k_x * innovation;
        self.p_x = ((1.0 - k_x) * pxp).max(0.0);

        let a = self.a_row;
        let ptp = &prediction.p_theta_prior;
        let pa = mat_vec(ptp, a);
        let s = a[0] * pa[0] + a[1] * pa[1] + self.sigma_z2;
        let k_theta = [pa[0] / s, pa[1] / s];
        let mut theta = [
            prediction.theta_prior[0] + k_theta[0] * innovation,
            prediction.theta_prior[1] + k_theta[1] * innovation,
        ];
        // (I - K A) P
        let mut p = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                p[i][j] = (0..2)
                    .map(|c| {
                        let ident = if i == c { 1.0 } else { 0.0 };
                        (ident - k_theta[i] * a[c]) * ptp[c][j]
                    })
                    .sum();
            }
        }
        let off = 0.5 * (p[0][1] + p[1][0]);
        p[0][1] = off;
        p[1][0] = off;
        p[0][0] = p[0][0].max(0.0);
        p[1][1] = p[1][1].max(0.0);
        theta[1] = theta[1].max(self.sigma2_min);
        self.theta.theta_hat = theta;
        self.theta.p_theta = p;
        Ok(())
    }

    /// Runs predict/filter over `speeds`, returning each step's point forecast exp(x_prior).
    pub fn run(&mut self, speeds: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(speeds.len());
        for &ws in speeds {
            let pred = self.predict();
            out.push(pred.s_point);
            self.filter(&pred, ws)?;
        }
        Ok(out)
    }
}

/// Rolling-origin selection of (Q, sigma_z2) on the training speeds.
///
/// Each grid point initializes a fresh filter on the leading `tuning_init_fraction`
/// of the window and is scored by the RMSE of exp(x_prior) against the remaining
/// observed speeds. Ties go to the smaller sigma_z2, then the smaller trace of Q.
pub fn tune_hyperparameters(train_speeds: &[f64], config: &RunConfig) -> Result<FilterHyper> {
    if train_speeds.len() < 50 {
        return Err(Error::TooShort { needed: 50, got: train_speeds.len() });
    }
    let g = &config.hyper_grid;
    let mut grid = Vec::new();
    for &sz in &g.sigma_z2 {
        for &qm in &g.q_mu {
            for &qs in &g.q_sigma2 {
                grid.push(FilterHyper { q_diag: [qm, qs], sigma_z2: sz });
            }
        }
    }
    if grid.is_empty() {
        return Err(Error::Config("speed hyperparameter grid is empty".into()));
    }
    let n_init = ((config.tuning_init_fraction * train_speeds.len() as f64).floor() as usize).max(3);
    let (head, tail) = train_speeds.split_at(n_init.min(train_speeds.len() - 1));
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|h| {
            let score = SpeedFilterState::initialize(head, *h, config).and_then(|mut f| {
                let preds = f.run(tail)?;
                let errs: Vec<f64> = preds.iter().zip(tail).map(|(p, o)| p - o).collect();
                Ok(stats::rmse(&errs))
            });
            match score {
                Ok(v) if v.is_finite() => v,
                _ => f64::INFINITY,
            }
        })
        .collect();
    let best = (0..grid.len())
        .min_by(|&i, &j| {
            let key = |k: usize| (scores[k], grid[k].sigma_z2, grid[k].q_diag[0] + grid[k].q_diag[1]);
            let (a, b) = (key(i), key(j));
            a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2))
        })
        .expect("grid is nonempty");
    if !scores[best].is_finite() {
        return Err(Error::Estimation("every speed hyperparameter candidate failed".into()));
    }
    Ok(grid[best])
}
