//! Probabilistic one-step wind power forecasting.
//!
//! Wind speed follows an inhomogeneous geometric Brownian motion whose drift and
//! volatility are tracked by a dual Kalman filter. An online kernel regression learns
//! the speed-to-power curve, and Ito's lemma carries the speed dynamics through the
//! curve to a closed-form log-normal density of the next power value. Point forecasts
//! are quantiles of that density chosen for an asymmetric linear loss.

pub mod baselines;
pub mod config;
pub mod data;
pub mod density;
pub mod error;
pub mod evaluation;
pub mod forecaster;
pub mod power_curve;
pub mod snapshot;
pub mod speed_filter;
pub mod stats;
pub mod synth;

pub use config::RunConfig;
pub use data::SeriesFrame;
pub use density::LogNormalDensity;
pub use error::{Error, Result};
pub use forecaster::{run_backtest, ForecastRecord, Forecaster};
