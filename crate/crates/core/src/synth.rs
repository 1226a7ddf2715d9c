//! Synthetic wind-farm series from the generative model: inhomogeneous GBM speed,
//! a logistic true power curve and accumulated conversion noise.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::power_curve::CurveEvaluation;

/// Time profile of mu_S or sigma_S.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// level + amplitude * sin(2 pi t / period)
    Sinusoid { level: f64, amplitude: f64, period: f64 },
}

impl Profile {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Sinusoid { level, amplitude, period } => {
                level + amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin()
            }
        }
    }

    fn min_value(&self) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Sinusoid { level, amplitude, .. } => level - amplitude.abs(),
        }
    }
}

/// F(s) = L / (1 + exp(-k (s - m))).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticCurve {
    pub l: f64,
    pub k: f64,
    pub m: f64,
}

impl LogisticCurve {
    fn sigmoid(&self, s: f64) -> f64 {
        1.0 / (1.0 + (-self.k * (s - self.m)).exp())
    }

    pub fn value(&self, s: f64) -> f64 {
        self.l * self.sigmoid(s)
    }

    pub fn d1(&self, s: f64) -> f64 {
        let g = self.sigmoid(s);
        self.l * self.k * g * (1.0 - g)
    }

    pub fn d2(&self, s: f64) -> f64 {
        let g = self.sigmoid(s);
        self.l * self.k * self.k * g * (1.0 - g) * (1.0 - 2.0 * g)
    }

    /// Time-invariant curve evaluation (F_t = 0).
    pub fn evaluate(&self, s: f64) -> CurveEvaluation {
        CurveEvaluation { f: self.value(s), f_t: 0.0, f_s: self.d1(s), f_ss: self.d2(s) }
    }
}

impl Default for LogisticCurve {
    fn default() -> Self {
        Self { l: 100.0, k: 0.6, m: 9.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub n_steps: usize,
    pub delta_t: f64,
    pub mu_profile: Profile,
    pub sigma_profile: Profile,
    pub s0: f64,
    pub true_curve: LogisticCurve,
    pub sigma_f_true: f64,
    /// Variance of the log-speed measurement noise.
    pub obs_noise_var: f64,
    pub seed: u64,
    pub start_timestamp: i64,
    pub spacing_secs: i64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            delta_t: 1.0,
            mu_profile: Profile::Constant { value: 0.0 },
            sigma_profile: Profile::Constant { value: 0.05 },
            s0: 9.0,
            true_curve: LogisticCurve::default(),
            sigma_f_true: 0.1,
            obs_noise_var: 1e-4,
            seed: 0,
            start_timestamp: 1_600_000_000,
            spacing_secs: 600,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.n_steps == 0 {
            return bad("n_steps must be positive");
        }
        if !(self.delta_t > 0.0) {
            return bad("delta_t must be positive");
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return bad("s0 must be positive");
        }
        if !(self.sigma_profile.min_value() >= 0.0) {
            return bad("sigma profile must stay nonnegative");
        }
        if let Profile::Sinusoid { period, .. } = self.sigma_profile {
            if !(period > 0.0) {
                return bad("sinusoid period must be positive");
            }
        }
        if let Profile::Sinusoid { period, .. } = self.mu_profile {
            if !(period > 0.0) {
                return bad("sinusoid period must be positive");
            }
        }
        let c = self.true_curve;
        if !(c.l > 0.0 && c.l <= 100.0) || !c.k.is_finite() || !c.m.is_finite() {
            return bad("logistic curve needs L in (0,100] and finite k, m");
        }
        if !(self.sigma_f_true >= 0.0 && self.obs_noise_var >= 0.0) {
            return bad("noise levels must be nonnegative");
        }
        if self.spacing_secs <= 0 {
            return bad("spacing_secs must be positive");
        }
        Ok(())
    }
}

/// Per-step ground truth written next to the simulated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub step: usize,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub true_speed: f64,
    pub f: f64,
    pub f_s: f64,
    pub f_ss: f64,
    /// Accumulated conversion noise e(t).
    pub e: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub frame: SeriesFrame,
    pub truth: Vec<TruthRow>,
    pub clamp_count: usize,
}

impl SimOutput {
    pub fn write_truth_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.truth {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates `n_steps` observations. Row t holds the state at time t; row 0 is
/// (s0 measured with noise, F(s0)).
pub fn simulate(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dt = spec.delta_t;
    let sz = spec.obs_noise_var.sqrt();
    let curve = spec.true_curve;
    let mut x = spec.s0.ln();
    let mut e = 0.0;
    let mut speed = Vec::with_capacity(spec.n_steps);
    let mut power = Vec::with_capacity(spec.n_steps);
    let mut truth = Vec::with_capacity(spec.n_steps);
    let mut clamp_count = 0;
    for t in 0..spec.n_steps {
        if t > 0 {
            let mu = spec.mu_profile.at(t - 1);
            let sigma = spec.sigma_profile.at(t - 1);
            let s_prev = x.exp();
            let dw: f64 = StandardNormal.sample(&mut rng);
            x += (mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * dw;
            let de: f64 = StandardNormal.sample(&mut rng);
            e += spec.sigma_f_true * (curve.d1(s_prev).max(0.0) * dt).sqrt() * de;
        }
        let s = x.exp();
        let z: f64 = StandardNormal.sample(&mut rng);
        speed.push((x + sz * z).exp());
        let raw = curve.value(s) + e;
        let clamped = !(0.0..=100.0).contains(&raw);
        if clamped {
            clamp_count += 1;
        }
        power.push(raw.clamp(0.0, 100.0));
        truth.push(TruthRow {
            step: t,
            mu_s: spec.mu_profile.at(t),
            sigma_s: spec.sigma_profile.at(t),
            true_speed: s,
            f: curve.value(s),
            f_s: curve.d1(s),
            f_ss: curve.d2(s),
            e,
            clamped,
        });
    }
    let timestamps = (0..spec.n_steps as i64).map(|i| spec.start_timestamp + i * spec.spacing_secs).collect();
    let frame = SeriesFrame::new(timestamps, speed, power, dt, 1.0)?;
    Ok(SimOutput { frame, truth, clamp_count })
}

/// Parameters of a single one-step transition draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSpec {
    pub s: f64,
    pub p: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub curve: LogisticCurve,
    pub sigma_f: f64,
    pub delta_t: f64,
}

/// Draws P(t + dt) = p + F(S(t + dt)) - F(s) + de `n_draws` times.
pub fn one_step_transition_sample(spec: &TransitionSpec, n_draws: usize, seed: u64) -> Result<Vec<f64>> {
    if n_draws < 10_000 {
        return Err(Error::InvalidArgument(format!("need at least 10000 draws, got {n_draws}")));
    }
    if !(spec.s > 0.0 && spec.sigma_s >= 0.0 && spec.sigma_f >= 0.0 && spec.delta_t > 0.0) {
        return Err(Error::InvalidArgument("invalid transition parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let TransitionSpec { s, p, mu_s, sigma_s, curve, sigma_f, delta_t: dt } = *spec;
    let drift = s.ln() + (mu_s - 0.5 * sigma_s * sigma_s) * dt;
    let noise_sd = sigma_f * (curve.d1(s).max(0.0) * dt).sqrt();
    let f_now = curve.value(s);
    Ok((0..n_draws)
        .map(|_| {
            let dw: f64 = StandardNormal.sample(&mut rng);
            let de: f64 = StandardNormal.sample(&mut rng);
            let s_next = (drift + sigma_s * dt.sqrt() * dw).exp();
            p + curve.value(s_next) - f_now + noise_sd * de
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degenerate_spec_is_constant() {
        let spec = SimSpec {
            n_steps: 50,
            mu_profile: Profile::Constant { value: 0.0 },
            sigma_profile: Profile::Constant { value: 0.0 },
            sigma_f_true: 0.0,
            obs_noise_var: 0.0,
            s0: 7.5,
            ..SimSpec::default()
        };
        let out = simulate(&spec).unwrap();
        let f0 = spec.true_curve.value(7.5);
        for (s, p) in out.frame.speed.iter().zip(&out.frame.power) {
            assert_relative_eq!(*s, 7.5, max_relative = 1e-14);
            assert_relative_eq!(*p, f0, max_relative = 1e-13);
        }
        assert_eq!(out.clamp_count, 0);
    }

    #[test]
    fn same_seed_same_output() {
        let spec = SimSpec { n_steps: 300, seed: 42, ..SimSpec::default() };
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        assert_eq!(a, b);
        let c = simulate(&SimSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.frame.speed, c.frame.speed);
    }

    #[test]
    fn log_returns_match_drift_and_volatility() {
        let spec = SimSpec {
            n_steps: 100_001,
            mu_profile: Profile::Constant { value: 0.01 },
            sigma_profile: Profile::Constant { value: 0.1 },
            obs_noise_var: 0.0,
            s0: 1.0,
            seed: 5,
            ..SimSpec::default()
        };
        let out = simulate(&spec).unwrap();
        let r: Vec<f64> = out.truth.windows(2).map(|w| (w[1].true_speed / w[0].true_speed).ln()).collect();
        let n = r.len() as f64;
        let m = crate::stats::mean(&r);
        let sd = crate::stats::sample_std(&r);
        // Oracle values from the GBM transition: N((mu - sigma^2/2) dt, sigma^2 dt).
        let (m_true, sd_true) = (0.01 - 0.5 * 0.01, 0.1);
        assert!((m - m_true).abs() <= 3.0 * sd_true / n.sqrt(), "mean {m}");
        // se of the sample sd is about sd / sqrt(2n)
        assert!((sd - sd_true).abs() <= 3.0 * sd_true / (2.0 * n).sqrt(), "sd {sd}");
    }

    #[test]
    fn power_is_clamped_and_counted() {
        let spec = SimSpec {
            n_steps: 3000,
            sigma_f_true: 3.0,
            sigma_profile: Profile::Constant { value: 0.08 },
            seed: 9,
            ..SimSpec::default()
        };
        let out = simulate(&spec).unwrap();
        assert!(out.frame.power.iter().all(|p| (0.0..=100.0).contains(p)));
        assert_eq!(out.clamp_count, out.truth.iter().filter(|t| t.clamped).count());
        assert!(out.clamp_count > 0);
    }

    #[test]
    fn logistic_slope_at_midpoint() {
        let c = LogisticCurve { l: 80.0, k: 0.7, m: 10.0 };
        assert_relative_eq!(c.d1(10.0), 80.0 * 0.7 / 4.0, max_relative = 1e-15);
        assert_relative_eq!(c.value(10.0), 40.0, max_relative = 1e-15);
        assert!(c.d2(10.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_derivatives_match_finite_differences() {
        let c = LogisticCurve { l: 100.0, k: 0.5, m: 10.0 };
        let h = 1e-4;
        for s in [2.0, 6.5, 9.0, 10.3, 14.0, 20.0] {
            let fd1 = (c.value(s + h) - c.value(s - h)) / (2.0 * h);
            let fd2 = (c.d1(s + h) - c.d1(s - h)) / (2.0 * h);
            assert_relative_eq!(c.d1(s), fd1, max_relative = 1e-6);
            assert_relative_eq!(c.d2(s), fd2, max_relative = 1e-6);
        }
    }

    #[test]
    fn noiseless_transition_is_deterministic() {
        let curve = LogisticCurve { l: 100.0, k: 0.5, m: 10.0 };
        let spec = TransitionSpec { s: 9.0, p: curve.value(9.0), mu_s: 0.02, sigma_s: 0.0, curve, sigma_f: 0.0, delta_t: 1.0 };
        let draws = one_step_transition_sample(&spec, 10_000, 1).unwrap();
        let expected = curve.value((9.0f64.ln() + 0.02).exp());
        assert!(draws.iter().all(|d| (d - expected).abs() < 1e-12));
    }

    #[test]
    fn transition_needs_enough_draws() {
        let curve = LogisticCurve::default();
        let spec = TransitionSpec { s: 9.0, p: 50.0, mu_s: 0.0, sigma_s: 0.05, curve, sigma_f: 0.0, delta_t: 1.0 };
        assert!(one_step_transition_sample(&spec, 9_999, 1).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(simulate(&SimSpec { s0: 0.0, ..SimSpec::default() }).is_err());
        let neg = Profile::Sinusoid { level: 0.01, amplitude: 0.05, period: 100.0 };
        assert!(simulate(&SimSpec { sigma_profile: neg, ..SimSpec::default() }).is_err());
        let curve = LogisticCurve { l: 120.0, ..LogisticCurve::default() };
        assert!(simulate(&SimSpec { true_curve: curve, ..SimSpec::default() }).is_err());
    }
}
