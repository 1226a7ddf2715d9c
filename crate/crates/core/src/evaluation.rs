//! Power-curve error (PCE), RMSE/MAE, interval coverage and the PCE-vs-alpha sweep.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, BaselineRecord};
use crate::error::{Error, Result};
use crate::forecaster::ForecastRecord;

pub const PROPOSED: &str = "proposed";

/// alpha (P - P_hat) when underestimating, (1 - alpha)(P_hat - P) otherwise.
pub fn pce(realized: f64, forecast: f64, alpha: f64) -> f64 {
    if forecast < realized {
        alpha * (realized - forecast)
    } else {
        (1.0 - alpha) * (forecast - realized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub alpha: f64,
    pub pce_avg: f64,
    pub rmse: f64,
    pub mae: f64,
    /// (level, empirical coverage); only filled for the proposed method.
    pub coverage: Vec<(f64, f64)>,
    pub n_test: usize,
}

/// Forecasts of one method: what it predicts at each alpha, and its median.
pub trait MethodForecasts {
    fn forecast_at(&self, alpha: f64) -> Result<f64>;
    fn median(&self) -> f64;
    fn realized(&self) -> f64;
}

impl MethodForecasts for ForecastRecord {
    fn forecast_at(&self, alpha: f64) -> Result<f64> {
        self.density.quantile(alpha)
    }

    fn median(&self) -> f64 {
        self.density.median()
    }

    fn realized(&self) -> f64 {
        self.realized_power
    }
}

impl MethodForecasts for BaselineRecord {
    fn forecast_at(&self, alpha: f64) -> Result<f64> {
        BaselineRecord::forecast_at(self, alpha).ok_or_else(|| {
            Error::InvalidArgument(format!("{} record has no forecast for alpha {alpha}", self.method.name()))
        })
    }

    fn median(&self) -> f64 {
        self.median
    }

    fn realized(&self) -> f64 {
        self.realized_power
    }
}

pub fn average_pce<R: MethodForecasts>(records: &[R], alpha: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no forecast records".into()));
    }
    let mut total = 0.0;
    for r in records {
        total += pce(r.realized(), r.forecast_at(alpha)?, alpha);
    }
    Ok(total / records.len() as f64)
}

/// PCE at `alpha`; RMSE and MAE of the median forecast.
pub fn method_report<R: MethodForecasts>(method: &str, records: &[R], alpha: f64) -> Result<MetricReport> {
    let pce_avg = average_pce(records, alpha)?;
    let n = records.len() as f64;
    let errors: Vec<f64> = records.iter().map(|r| r.median() - r.realized()).collect();
    Ok(MetricReport {
        method: method.to_string(),
        alpha,
        pce_avg,
        rmse: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        mae: errors.iter().map(|e| e.abs()).sum::<f64>() / n,
        coverage: Vec::new(),
        n_test: records.len(),
    })
}

/// Fraction of realized powers inside each interval level (closed intervals).
pub fn coverage(records: &[ForecastRecord]) -> Vec<(f64, f64)> {
    let Some(first) = records.first() else { return Vec::new() };
    first
        .intervals
        .iter()
        .map(|iv0| {
            let inside = records
                .iter()
                .filter(|r| r.interval(iv0.level).is_some_and(|iv| iv.contains(r.realized_power)))
                .count();
            (iv0.level, inside as f64 / records.len() as f64)
        })
        .collect()
}

pub fn summarize(
    proposed: &[ForecastRecord],
    baselines: &[(BaselineKind, Vec<BaselineRecord>)],
    alpha: f64,
) -> Result<Vec<MetricReport>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must be in (0,1)")));
    }
    let mut reports = Vec::with_capacity(1 + baselines.len());
    let mut own = method_report(PROPOSED, proposed, alpha)?;
    own.coverage = coverage(proposed);
    reports.push(own);
    for (kind, recs) in baselines {
        reports.push(method_report(kind.name(), recs, alpha)?);
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub method: String,
    pub avg_pce: f64,
}

/// Average PCE per method over an alpha grid, re-deriving each alpha-forecast from the
/// stored records without refitting.
pub fn pce_alpha_sweep(
    proposed: &[ForecastRecord],
    baselines: &[(BaselineKind, Vec<BaselineRecord>)],
    alphas: &[f64],
) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::InvalidArgument(format!("alpha {a} must lie strictly inside (0,1)")));
    }
    let rows: Vec<Vec<SweepRow>> = alphas
        .par_iter()
        .map(|&alpha| {
            let mut rows = vec![SweepRow { alpha, method: PROPOSED.into(), avg_pce: average_pce(proposed, alpha)? }];
            for (kind, recs) in baselines {
                rows.push(SweepRow { alpha, method: kind.name().into(), avg_pce: average_pce(recs, alpha)? });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "method", "avg_pce"])?;
    for r in rows {
        w.write_record([r.alpha.to_string(), r.method.clone(), r.avg_pce.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (dataset, method).
pub fn write_reports_csv<W: Write>(reports: &[(String, Vec<MetricReport>)], levels: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["dataset", "method", "alpha", "pce_avg", "rmse", "mae", "n_test"].map(String::from).to_vec();
    header.extend(levels.iter().map(|l| format!("coverage_{:02}", (l * 100.0).round() as i64)));
    w.write_record(&header)?;
    for (dataset, reps) in reports {
        for r in reps {
            let mut row = vec![
                dataset.clone(),
                r.method.clone(),
                r.alpha.to_string(),
                r.pce_avg.to_string(),
                r.rmse.to_string(),
                r.mae.to_string(),
                r.n_test.to_string(),
            ];
            for l in levels {
                row.push(
                    r.coverage.iter().find(|(lv, _)| (lv - l).abs() < 1e-12).map(|(_, c)| c.to_string()).unwrap_or_default(),
                );
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Average PCE laid out method x dataset.
pub fn write_pce_table_csv<W: Write>(reports: &[(String, Vec<MetricReport>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["method".to_string()];
    header.extend(reports.iter().map(|(d, _)| d.clone()));
    w.write_record(&header)?;
    let methods: Vec<String> = reports.first().map(|(_, r)| r.iter().map(|m| m.method.clone()).collect()).unwrap_or_default();
    for m in methods {
        let mut row = vec![m.clone()];
        for (_, reps) in reports {
            row.push(reps.iter().find(|r| r.method == m).map(|r| r.pce_avg.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
