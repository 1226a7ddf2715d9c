//! Wind-speed baselines pushed through the power curve: persistence, ARMA and AR-GARCH.
//!
//! ARMA and AR-GARCH give Gaussian predictive speed densities; their alpha-quantile
//! speed is mapped through the online curve. Persistence is alpha-invariant.

mod arma;
mod garch;
mod linalg;
pub mod optim;

pub use arma::{arma_quantile_forecast, fit_ar_by_bic, fit_arma, ArmaModel};
pub use garch::{fit_ar_garch, fit_garch11, ArGarchModel, GarchParams};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::power_curve::{fit_initial, PowerCurveModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Persistent,
    Arma,
    ArGarch,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Persistent, BaselineKind::Arma, BaselineKind::ArGarch];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Persistent => "persistent",
            BaselineKind::Arma => "arma",
            BaselineKind::ArGarch => "ar-garch",
        }
    }
}

/// The current speed is the forecast, whatever alpha is.
pub fn persistent_forecast(s_now: f64) -> f64 {
    s_now
}

/// Curve value at the forecast speed, clamped to [0, 100].
pub fn baseline_power_forecast(speed_forecast: f64, curve: &PowerCurveModel) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::EmptyModel);
    }
    Ok(curve.value(speed_forecast).clamp(0.0, 100.0))
}

/// One test step of a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub step: usize,
    pub method: BaselineKind,
    /// Gaussian predictive speed density (sd = 0 for persistence).
    pub speed_mean: f64,
    pub speed_sd: f64,
    /// (alpha, power forecast) for every requested alpha.
    pub forecasts: Vec<(f64, f64)>,
    /// Power forecast from the median speed.
    pub median: f64,
    pub realized_power: f64,
    pub realized_speed: f64,
}

impl BaselineRecord {
    pub fn forecast_at(&self, alpha: f64) -> Option<f64> {
        if alpha == 0.5 {
            return Some(self.median);
        }
        self.forecasts.iter().find(|(a, _)| (a - alpha).abs() < 1e-12).map(|(_, p)| *p)
    }
}

enum Fitted {
    Persistent,
    Arma(ArmaModel),
    ArGarch(ArGarchModel),
}

impl Fitted {
    fn fit(kind: BaselineKind, history: &[f64], config: &RunConfig) -> Result<Self> {
        Ok(match kind {
            BaselineKind::Persistent => Fitted::Persistent,
            BaselineKind::Arma => Fitted::Arma(fit_arma(history, config.baselines.max_order)?),
            BaselineKind::ArGarch => Fitted::ArGarch(fit_ar_garch(history, config.baselines.max_ar)?),
        })
    }

    fn predictive(&self, history: &[f64]) -> (f64, f64) {
        match self {
            Fitted::Persistent => (persistent_forecast(history[history.len() - 1]), 0.0),
            Fitted::Arma(m) => m.predictive(history),
            Fitted::ArGarch(m) => m.predictive(history),
        }
    }
}

/// Runs one baseline over `test`, refitting every `refit_every` steps on the speeds
/// observed so far. Power forecasts use a curve fitted on `train` and updated with
/// each observed (speed, power) pair after the forecast is issued.
pub fn run_baseline_backtest(
    kind: BaselineKind,
    train: &SeriesFrame,
    test: &SeriesFrame,
    config: &RunConfig,
    alphas: &[f64],
) -> Result<Vec<BaselineRecord>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::InvalidArgument(format!("alpha {a} must be in (0,1)")));
    }
    let mut curve = fit_initial(train, config)?;
    let mut history = train.speed.clone();
    let floor = config.speed_floor;
    let mut model = Fitted::Persistent;
    let mut records = Vec::with_capacity(test.len());
    for (i, (&ws, &p)) in test.speed.iter().zip(&test.power).enumerate() {
        if i % config.baselines.refit_every == 0 {
            model = Fitted::fit(kind, &history, config)?;
        }
        let (mean, sd) = model.predictive(&history);
        let power_at = |speed: f64| baseline_power_forecast(speed.max(floor), &curve);
        let forecasts = alphas
            .iter()
            .map(|&a| Ok((a, power_at(arma::gaussian_quantile(mean, sd, a))?)))
            .collect::<Result<Vec<_>>>()?;
        records.push(BaselineRecord {
            step: i,
            method: kind,
            speed_mean: mean,
            speed_sd: sd,
            forecasts,
            median: power_at(mean)?,
            realized_power: p,
            realized_speed: ws,
        });
        history.push(ws);
        curve.update(ws, p);
    }
    Ok(records)
}
