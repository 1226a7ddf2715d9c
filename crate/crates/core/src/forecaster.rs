//! Quantiles, shortest prediction intervals and cost-optimal point forecasts from the
//! log-normal power density, plus the one-step predict/filter backtest loop.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{EvalPoint, RunConfig};
use crate::data::SeriesFrame;
use crate::density::{power_dynamics, predictive_power_density, LogNormalDensity, PowerDynamics};
use crate::error::{Error, Result};
use crate::power_curve::{estimate_sigma_f, fit_initial, CurveEvaluation, PowerCurveModel};
use crate::speed_filter::{tune_hyperparameters, FilterHyper, SpeedFilterState, SpeedPrediction};
use crate::stats::{norm_cdf, norm_ppf};

const INTERVAL_TOL: f64 = 1e-10;

pub fn quantile(density: &LogNormalDensity, beta: f64) -> Result<f64> {
    density.quantile(beta)
}

/// Shortest (highest-density) prediction interval of a log-normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
    /// Standardized endpoints: lo = exp(mu' + sigma' a), hi = exp(mu' + sigma' b).
    pub a: f64,
    pub b: f64,
}

impl PredictionInterval {
    /// Closed-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Solves Phi(b) - Phi(a) = level with a + b = -2 sigma'.
///
/// g(a) = Phi(-2 sigma' - a) - Phi(a) - level is strictly decreasing on a < -sigma',
/// positive far left and equal to -level at a = -sigma', so bisection brackets the root.
/// A degenerate density (sigma' = 0) yields the point interval at exp(mu').
pub fn prediction_interval(density: &LogNormalDensity, level: f64) -> Result<PredictionInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("interval level {level} must be in (0,1)")));
    }
    let sigma = density.sigma_prime;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma' {sigma} is invalid")));
    }
    let mu = density.mu_prime;
    if sigma == 0.0 {
        log::debug!("degenerate density: returning point interval");
        let m = mu.exp();
        return Ok(PredictionInterval { level, lo: m, hi: m, a: 0.0, b: 0.0 });
    }
    let g = |a: f64| norm_cdf(-2.0 * sigma - a) - norm_cdf(a) - level;
    let mut right = -sigma;
    let mut left = -sigma - 1.0;
    while g(left) <= 0.0 {
        left -= 2.0 * (right - left);
    }
    let mut a = 0.5 * (left + right);
    for _ in 0..400 {
        a = 0.5 * (left + right);
        let v = g(a);
        if v.abs() <= INTERVAL_TOL {
            break;
        }
        if v > 0.0 {
            left = a;
        } else {
            right = a;
        }
    }
    let b = -2.0 * sigma - a;
    Ok(PredictionInterval { level, lo: (mu + sigma * a).exp(), hi: (mu + sigma * b).exp(), a, b })
}

/// Equal-tailed interval at the same coverage, for comparison.
pub fn equal_tailed_interval(density: &LogNormalDensity, level: f64) -> (f64, f64) {
    let z = norm_ppf(0.5 + level / 2.0);
    ((density.mu_prime - density.sigma_prime * z).exp(), (density.mu_prime + density.sigma_prime * z).exp())
}

/// Minimizer of alpha * E[(P - p)+] + (1 - alpha) * E[(p - P)+], i.e. the alpha-quantile.
pub fn optimal_point(density: &LogNormalDensity, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha}: the expected-cost minimizer is only finite for alpha in (0,1)"
        )));
    }
    density.quantile(alpha)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFlags {
    /// Last observed power was below the floor and was raised to it.
    pub power_floored: bool,
    /// sigma' exceeded its cap.
    pub sigma_capped: bool,
    /// sigma' was zero; intervals collapse to a point.
    pub degenerate: bool,
}

impl RecordFlags {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.power_floored {
            parts.push("floored");
        }
        if self.sigma_capped {
            parts.push("capped");
        }
        if self.degenerate {
            parts.push("degenerate");
        }
        parts.join(";")
    }
}

/// One test step: the forecast issued before observing step `step`, and what was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub step: usize,
    pub alpha: f64,
    pub point: f64,
    /// (beta, Q_beta), increasing in beta.
    pub quantiles: Vec<(f64, f64)>,
    pub intervals: Vec<PredictionInterval>,
    pub density: LogNormalDensity,
    pub dynamics: PowerDynamics,
    /// Speed at which the curve was evaluated.
    pub speed_forecast: f64,
    pub realized_power: f64,
    pub realized_speed: f64,
    pub flags: RecordFlags,
}

impl ForecastRecord {
    pub fn interval(&self, level: f64) -> Option<&PredictionInterval> {
        self.intervals.iter().find(|iv| (iv.level - level).abs() < 1e-12)
    }
}

/// Forecast for the next step, issued before its observation arrives.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingForecast {
    pub speed: SpeedPrediction,
    pub curve: CurveEvaluation,
    pub speed_forecast: f64,
    pub dynamics: PowerDynamics,
    pub density: LogNormalDensity,
    pub point: f64,
    pub quantiles: Vec<(f64, f64)>,
    pub intervals: Vec<PredictionInterval>,
    pub flags: RecordFlags,
}

/// Fitted pipeline state: everything needed to continue forecasting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub config: RunConfig,
    pub hyper: FilterHyper,
    pub filter: SpeedFilterState,
    pub curve: PowerCurveModel,
    pub last_power: f64,
    /// Index of the next step to be forecast.
    pub step: usize,
}

impl Forecaster {
    /// Initialization on the training window: hyperparameter tuning, filter start,
    /// sequential curve fit and the conversion-noise estimate.
    pub fn fit(train: &SeriesFrame, config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let hyper = tune_hyperparameters(&train.speed, config)?;
        let filter = SpeedFilterState::initialize(&train.speed, hyper, config)?;
        let mut curve = fit_initial(train, config)?;
        curve.sigma_f = match estimate_sigma_f(&curve, train, config.f_s_floor) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("sigma_F could not be estimated ({e}); using 0");
                0.0
            }
        };
        let last_power = *train.power.last().ok_or_else(|| Error::EmptyInput("training set".into()))?;
        Ok(Self { config: config.clone(), hyper, filter, curve, last_power, step: 0 })
    }

    pub fn forecast(&self) -> Result<PendingForecast> {
        let cfg = &self.config;
        let speed = self.filter.predict();
        let speed_forecast = match cfg.curve_eval_point {
            EvalPoint::Median => speed.s_point,
            EvalPoint::Mean => (speed.x_prior + 0.5 * speed.density.sigma_prime.powi(2)).exp(),
        };
        let curve = self.curve.evaluate(speed_forecast)?;
        let mut flags = RecordFlags::default();
        let p_now = if self.last_power < cfg.power_floor {
            flags.power_floored = true;
            cfg.power_floor
        } else {
            self.last_power
        };
        let dynamics =
            power_dynamics(speed_forecast, p_now, speed.mu_s, speed.sigma_s2, &curve, self.curve.sigma_f, cfg.power_floor)?;
        let mut density = predictive_power_density(p_now, &dynamics, cfg.delta_t)?;
        if !(density.mu_prime.is_finite() && density.sigma_prime.is_finite()) {
            return Err(Error::Estimation(format!("non-finite power density at step {}", self.step)));
        }
        if density.sigma_prime > cfg.sigma_prime_max {
            density.sigma_prime = cfg.sigma_prime_max;
            flags.sigma_capped = true;
        }
        if density.sigma_prime == 0.0 {
            flags.degenerate = true;
        }
        let mut betas = cfg.quantile_levels.clone();
        betas.sort_by(f64::total_cmp);
        let quantiles = betas.iter().map(|&b| Ok((b, density.quantile(b)?))).collect::<Result<Vec<_>>>()?;
        let intervals =
            cfg.interval_levels.iter().map(|&l| prediction_interval(&density, l)).collect::<Result<Vec<_>>>()?;
        let point = optimal_point(&density, cfg.alpha_loss)?;
        Ok(PendingForecast { speed, curve, speed_forecast, dynamics, density, point, quantiles, intervals, flags })
    }

    /// Filtering step after the observation (speed, power) of the forecast step arrives.
    pub fn observe(&mut self, pending: PendingForecast, speed: f64, power: f64) -> Result<ForecastRecord> {
        self.filter.filter(&pending.speed, speed)?;
        self.curve.update(self.filter.x_hat.exp(), power);
        self.last_power = power;
        let record = ForecastRecord {
            step: self.step,
            alpha: self.config.alpha_loss,
            point: pending.point,
            quantiles: pending.quantiles,
            intervals: pending.intervals,
            density: pending.density,
            dynamics: pending.dynamics,
            speed_forecast: pending.speed_forecast,
            realized_power: power,
            realized_speed: speed,
            flags: pending.flags,
        };
        self.step += 1;
        Ok(record)
    }

    /// Forecasts every row of `test` in order.
    pub fn run(&mut self, test: &SeriesFrame) -> Result<Vec<ForecastRecord>> {
        let mut out = Vec::with_capacity(test.len());
        for (&s, &p) in test.speed.iter().zip(&test.power) {
            let pending = self.forecast()?;
            out.push(self.observe(pending, s, p)?);
        }
        Ok(out)
    }
}

/// Fits on `train` and forecasts `test` one step at a time.
pub fn run_backtest(train: &SeriesFrame, test: &SeriesFrame, config: &RunConfig) -> Result<Vec<ForecastRecord>> {
    let mut f = Forecaster::fit(train, config)?;
    f.run(test)
}

fn level_tag(x: f64) -> String {
    format!("{:02}", (x * 100.0).round() as i64)
}

/// Forecast records as CSV: step, point, q.., lo/hi per level, mu_prime, sigma_prime,
/// realized_power, flags.
pub fn write_records_csv<W: Write>(records: &[ForecastRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = records.first() else {
        w.write_record(["step", "point", "mu_prime", "sigma_prime", "realized_power", "flags"])?;
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["step".to_string(), "point".to_string()];
    header.extend(first.quantiles.iter().map(|(b, _)| format!("q{}", level_tag(*b))));
    for iv in &first.intervals {
        header.push(format!("lo{}", level_tag(iv.level)));
        header.push(format!("hi{}", level_tag(iv.level)));
    }
    header.extend(["mu_prime", "sigma_prime", "realized_power", "flags"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.step.to_string(), r.point.to_string()];
        row.extend(r.quantiles.iter().map(|(_, q)| q.to_string()));
        for iv in &r.intervals {
            row.push(iv.lo.to_string());
            row.push(iv.hi.to_string());
        }
        row.push(r.density.mu_prime.to_string());
        row.push(r.density.sigma_prime.to_string());
        row.push(r.realized_power.to_string());
        row.push(r.flags.label());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_jsonl<W: Write>(records: &[ForecastRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
