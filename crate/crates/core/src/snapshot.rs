//! Versioned JSON snapshots of a fitted [`Forecaster`], used to resume forecasting.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::Forecaster;

pub const SNAPSHOT_FORMAT: &str = "windcast-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub forecaster: Forecaster,
}

impl Snapshot {
    pub fn new(forecaster: Forecaster) -> Self {
        Self { format: SNAPSHOT_FORMAT.into(), version: SNAPSHOT_VERSION, forecaster }
    }
}

pub fn to_json(forecaster: &Forecaster) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Snapshot::new(forecaster.clone()))?)
}

/// Parses and checks a snapshot; the embedded config is validated as well.
pub fn parse_snapshot(text: &str) -> Result<Forecaster> {
    let snap: Snapshot = serde_json::from_str(text)?;
    if snap.format != SNAPSHOT_FORMAT {
        return Err(Error::Config(format!("not a snapshot (format {:?})", snap.format)));
    }
    if snap.version != SNAPSHOT_VERSION {
        return Err(Error::Config(format!(
            "snapshot version {} is not supported (expected {SNAPSHOT_VERSION})",
            snap.version
        )));
    }
    let f = snap.forecaster;
    f.config.validate()?;
    if f.curve.centers.len() != f.curve.lambdas.len() || f.curve.len() > f.curve.window {
        return Err(Error::Config("inconsistent curve dictionary in snapshot".into()));
    }
    if !(f.curve.delta > 0.0 && f.curve.gamma > 0.0) {
        return Err(Error::Config("curve bandwidth and regularization must be positive".into()));
    }
    Ok(f)
}

pub fn save(forecaster: &Forecaster, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(to_json(forecaster)?.as_bytes())?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Forecaster> {
    parse_snapshot(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::synth::{simulate, SimSpec};

    fn fitted() -> Forecaster {
        let out = simulate(&SimSpec { n_steps: 200, seed: 3, ..SimSpec::default() }).unwrap();
        let mut cfg = RunConfig::default();
        cfg.hyper_grid.delta = vec![1.0];
        cfg.hyper_grid.gamma = vec![0.2];
        Forecaster::fit(&out.frame, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let f = fitted();
        let back = parse_snapshot(&to_json(&f).unwrap()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn rejects_wrong_version_and_garbage() {
        let f = fitted();
        let text = to_json(&f).unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(parse_snapshot(&text).is_err());
        assert!(parse_snapshot("{}").is_err());
        assert!(parse_snapshot("not json").is_err());
    }
}
