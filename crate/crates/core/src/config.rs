//! Run configuration, read from a TOML key-value file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the power curve and its derivatives are evaluated for the power density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalPoint {
    /// exp(x_prior), the predictive median of speed.
    #[default]
    Median,
    /// exp(x_prior + P_X/2), the predictive mean of speed.
    Mean,
}

/// Candidate values searched when tuning hyperparameters on the training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    /// Diagonal entry of Q for the drift component.
    pub q_mu: Vec<f64>,
    /// Diagonal entry of Q for the squared-volatility component.
    pub q_sigma2: Vec<f64>,
    /// Observation noise variance of log speed.
    pub sigma_z2: Vec<f64>,
    /// Kernel bandwidth, in (m/s)^2.
    pub delta: Vec<f64>,
    /// Update regularizer of the kernel curve.
    pub gamma: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            q_mu: vec![1e-8, 1e-7, 1e-6],
            q_sigma2: vec![1e-12, 1e-11, 1e-10],
            sigma_z2: vec![1e-4, 1e-3, 1e-2],
            delta: vec![0.5, 1.0, 2.0, 4.0],
            gamma: vec![0.05, 0.2, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Largest p and q tried by the ARMA order search.
    pub max_order: usize,
    /// Largest AR order tried for the AR-GARCH mean equation.
    pub max_ar: usize,
    /// Refit ARMA / AR-GARCH every this many test steps.
    pub refit_every: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { max_order: 3, max_ar: 3, refit_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n0_fraction: f64,
    /// Penalty on underestimation used for the point forecast.
    pub alpha_loss: f64,
    pub interval_levels: Vec<f64>,
    pub quantile_levels: Vec<f64>,
    /// Raw power is multiplied by 100 / rated_capacity.
    pub rated_capacity: f64,
    pub speed_floor: f64,
    pub power_floor: f64,
    pub delta_t: f64,
    /// Volatility used when the training log-returns have zero spread.
    pub sigma_floor: f64,
    /// Lower clamp for the posterior squared volatility.
    pub sigma2_min: f64,
    /// Initial parameter covariance is this multiple of Q.
    pub p_theta_scale: f64,
    /// Use ln WS(k) / ln WS(k-1) instead of the log difference when initializing.
    pub literal_ratio_returns: bool,
    /// Dictionary budget of the kernel curve (oldest centers evicted first); unbounded when unset.
    pub dictionary_window: Option<usize>,
    /// Steps whose fitted slope is below this are skipped when estimating sigma_F.
    pub f_s_floor: f64,
    pub sigma_prime_max: f64,
    pub curve_eval_point: EvalPoint,
    /// Fraction of the training window used to initialize each candidate while tuning.
    pub tuning_init_fraction: f64,
    pub hyper_grid: HyperGrid,
    pub baselines: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n0_fraction: 0.70,
            alpha_loss: 0.5,
            interval_levels: vec![0.5, 0.9],
            quantile_levels: (1..=19).map(|i| i as f64 / 20.0).collect(),
            rated_capacity: 100.0,
            speed_floor: 0.1,
            power_floor: 0.1,
            delta_t: 1.0,
            sigma_floor: 1e-3,
            sigma2_min: 1e-8,
            p_theta_scale: 10.0,
            literal_ratio_returns: false,
            dictionary_window: None,
            f_s_floor: 1e-3,
            sigma_prime_max: 5.0,
            curve_eval_point: EvalPoint::Median,
            tuning_init_fraction: 0.5,
            hyper_grid: HyperGrid::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

fn in_open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

fn all_positive(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Config(format!("hyper_grid.{name} is empty")));
    }
    if xs.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::Config(format!("hyper_grid.{name} must hold positive finite values")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("RunConfig always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !in_open_unit(self.n0_fraction) {
            return Err(Error::Config("n0_fraction must be in (0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_loss) {
            return Err(Error::Config("alpha_loss must be in [0,1]".into()));
        }
        if self.interval_levels.iter().any(|l| !in_open_unit(*l)) {
            return Err(Error::Config("interval levels must be in (0,1)".into()));
        }
        if self.quantile_levels.iter().any(|l| !in_open_unit(*l)) {
            return Err(Error::Config("quantile levels must be in (0,1)".into()));
        }
        let positive = [
            ("rated_capacity", self.rated_capacity),
            ("speed_floor", self.speed_floor),
            ("power_floor", self.power_floor),
            ("delta_t", self.delta_t),
            ("sigma_floor", self.sigma_floor),
            ("sigma2_min", self.sigma2_min),
            ("p_theta_scale", self.p_theta_scale),
            ("f_s_floor", self.f_s_floor),
            ("sigma_prime_max", self.sigma_prime_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        if !in_open_unit(self.tuning_init_fraction) {
            return Err(Error::Config("tuning_init_fraction must be in (0,1)".into()));
        }
        if self.dictionary_window == Some(0) {
            return Err(Error::Config("dictionary_window must be at least 1".into()));
        }
        if self.baselines.refit_every == 0 {
            return Err(Error::Config("baselines.refit_every must be at least 1".into()));
        }
        let g = &self.hyper_grid;
        all_positive("q_mu", &g.q_mu)?;
        all_positive("q_sigma2", &g.q_sigma2)?;
        all_positive("sigma_z2", &g.sigma_z2)?;
        all_positive("delta", &g.delta)?;
        all_positive("gamma", &g.gamma)?;
        Ok(())
    }
}
