//! Time-series ingestion: CSV parsing, power scaling and the train/test split.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

/// Time-indexed (wind speed, power) observations with uniform spacing.
///
/// `power` is in percent of rated capacity; `power_scale` is the factor that was
/// applied to the raw values (100 / rated capacity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFrame {
    pub timestamps: Vec<i64>,
    pub speed: Vec<f64>,
    pub power: Vec<f64>,
    /// Step length used by the recursions (1 for one-step forecasting).
    pub delta_t: f64,
    /// Timestamp spacing in seconds; 0 for frames with fewer than two rows.
    pub spacing_secs: i64,
    pub power_scale: f64,
}

impl SeriesFrame {
    /// Builds a frame from already-scaled columns, checking every invariant.
    pub fn new(timestamps: Vec<i64>, speed: Vec<f64>, power: Vec<f64>, delta_t: f64, power_scale: f64) -> Result<Self> {
        if timestamps.len() != speed.len() || speed.len() != power.len() {
            return Err(Error::InvalidArgument("column lengths differ".into()));
        }
        let spacing_secs = check_spacing(&timestamps)?;
        if let Some(i) = speed.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(format!("speed at row {i} is not strictly positive")));
        }
        if let Some(i) = power.iter().position(|p| !(p.is_finite() && (0.0..=100.0).contains(p))) {
            return Err(Error::InvalidArgument(format!("power at row {i} is outside [0,100]")));
        }
        Ok(Self { timestamps, speed, power, delta_t, spacing_secs, power_scale })
    }

    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }

    /// Copy of rows `range`, keeping scaling metadata.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SeriesFrame {
        SeriesFrame {
            timestamps: self.timestamps[range.clone()].to_vec(),
            speed: self.speed[range.clone()].to_vec(),
            power: self.power[range].to_vec(),
            delta_t: self.delta_t,
            spacing_secs: self.spacing_secs,
            power_scale: self.power_scale,
        }
    }

    /// Power converted back to the units of the input file.
    pub fn unscaled_power(&self) -> Vec<f64> {
        self.power.iter().map(|p| p / self.power_scale).collect()
    }

    /// Writes the frame in the ingestion schema, with power in percent of capacity.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestamp", "wind_speed", "power"])?;
        for i in 0..self.len() {
            w.write_record([
                self.timestamps[i].to_string(),
                self.speed[i].to_string(),
                self.power[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_spacing(timestamps: &[i64]) -> Result<i64> {
    if timestamps.len() < 2 {
        return Ok(0);
    }
    let expected = timestamps[1] - timestamps[0];
    if expected <= 0 {
        return Err(Error::Spacing { line: 3, expected: 1, found: expected });
    }
    for (i, w) in timestamps.windows(2).enumerate() {
        let found = w[1] - w[0];
        if found != expected {
            // +2: header line and 1-based numbering
            return Err(Error::Spacing { line: i + 3, expected, found });
        }
    }
    Ok(expected)
}

/// Parses an integer epoch (seconds) or an ISO-8601 timestamp, naive times taken as UTC.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

fn parse_field(raw: &str, line: usize, name: &str) -> Result<f64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(Error::Parse { line, msg: format!("missing {name}") });
    }
    let v: f64 = raw.parse().map_err(|_| Error::Parse { line, msg: format!("invalid {name} '{raw}'") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite {name}") });
    }
    Ok(v)
}

/// Reads a `timestamp,wind_speed,power` CSV from any reader.
///
/// Power is scaled by 100 / rated_capacity and clamped to [0,100]; speeds at or
/// below the floor are replaced by the floor.
pub fn read_csv<R: Read>(input: R, config: &RunConfig) -> Result<SeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("missing column '{name}'") })
    };
    let (ti, si, pi) = (col("timestamp")?, col("wind_speed")?, col("power")?);
    let scale = 100.0 / config.rated_capacity;

    let mut timestamps = Vec::new();
    let mut speed = Vec::new();
    let mut power = Vec::new();
    let mut clamped = 0usize;
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let get = |i: usize, name: &str| {
            rec.get(i).ok_or_else(|| Error::Parse { line, msg: format!("missing {name}") })
        };
        let ts_raw = get(ti, "timestamp")?;
        let ts = parse_timestamp(ts_raw)
            .ok_or_else(|| Error::Parse { line, msg: format!("invalid timestamp '{}'", ts_raw.trim()) })?;
        let s = parse_field(get(si, "wind_speed")?, line, "wind_speed")?;
        let p = parse_field(get(pi, "power")?, line, "power")? * scale;
        let p_clamped = p.clamp(0.0, 100.0);
        if p_clamped != p {
            clamped += 1;
        }
        timestamps.push(ts);
        speed.push(if s <= config.speed_floor { config.speed_floor } else { s });
        power.push(p_clamped);
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyInput("no data rows".into()));
    }
    if clamped > 0 {
        log::warn!("{clamped} power values fell outside [0,100] after scaling and were clamped");
    }
    let spacing_secs = check_spacing(&timestamps)?;
    Ok(SeriesFrame { timestamps, speed, power, delta_t: config.delta_t, spacing_secs, power_scale: scale })
}

pub fn load_csv(path: impl AsRef<Path>, config: &RunConfig) -> Result<SeriesFrame> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(std::io::BufReader::new(file), config)
}

/// Chronological split: the first floor(n0_fraction * N) rows train, the rest test.
pub fn split_train_test(frame: &SeriesFrame, config: &RunConfig) -> Result<(SeriesFrame, SeriesFrame)> {
    let n = frame.len();
    if n < 10 {
        return Err(Error::TooShort { needed: 10, got: n });
    }
    // The tolerance keeps products such as 0.7 * 650 from flooring one row short.
    let n0 = ((config.n0_fraction * n as f64) * (1.0 + 1e-12)).floor() as usize;
    Ok((frame.slice(0..n0), frame.slice(n0..n)))
}
