//! RoCoF measurement and the definite-time RoCoF relay.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack on timer comparisons so that accumulated `dt` round-off cannot
/// move a trip by a whole step.
pub const TIMER_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocofEstimatorCfg {
    /// Regression window (s).
    pub window: f64,
    pub sample_dt: f64,
}

impl RocofEstimatorCfg {
    pub fn new(window: f64, sample_dt: f64) -> Result<Self> {
        if !(sample_dt.is_finite() && sample_dt > 0.0) {
            return Err(Error::Invalid(format!("sample_dt must be > 0, got {sample_dt}")));
        }
        if !(window.is_finite() && window >= 2.0 * sample_dt) {
            return Err(Error::Invalid(format!(
                "RoCoF window {window} s must span at least two samples of {sample_dt} s"
            )));
        }
        Ok(Self { window, sample_dt })
    }

    /// Number of samples a full window holds.
    pub fn window_samples(&self) -> usize {
        (self.window / self.sample_dt).round() as usize
    }
}

/// Sliding-window least-squares slope of a frequency signal.
#[derive(Debug, Clone)]
pub struct RocofEstimator {
    cfg: RocofEstimatorCfg,
    samples: VecDeque<(f64, f64)>,
    estimate: f64,
}

impl RocofEstimator {
    pub fn new(cfg: RocofEstimatorCfg) -> Self {
        Self {
            cfg,
            samples: VecDeque::with_capacity(cfg.window_samples() + 2),
            estimate: 0.0,
        }
    }

    /// Estimator whose window already holds a steady history at `f0`
    /// ending one sample before `t0`, as if the signal had been flat forever.
    pub fn primed(cfg: RocofEstimatorCfg, t0: f64, f0: f64) -> Self {
        let mut est = Self::new(cfg);
        let n = cfg.window_samples();
        for j in (1..=n).rev() {
            est.samples.push_back((t0 - j as f64 * cfg.sample_dt, f0));
        }
        est
    }

    pub fn cfg(&self) -> &RocofEstimatorCfg {
        &self.cfg
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Adds a sample and returns the new slope estimate (Hz/s).
    pub fn update(&mut self, f: f64, t: f64) -> Result<f64> {
        if !(f.is_finite() && t.is_finite()) {
            return Err(Error::Numerical(format!("non-finite RoCoF sample ({t}, {f})")));
        }
        if let Some(&(last, _)) = self.samples.back() {
            if t <= last {
                return Err(Error::Invalid(format!("RoCoF sample time {t} not after {last}")));
            }
        }
        self.samples.push_back((t, f));
        let oldest = t - self.cfg.window + TIMER_EPS;
        while self.samples.front().is_some_and(|&(ts, _)| ts < oldest) {
            self.samples.pop_front();
        }
        self.estimate = least_squares_slope(self.samples.iter().copied());
        Ok(self.estimate)
    }
}

/// Slope of the least-squares line through `(t, f)` points; 0 for fewer
/// than two points.
pub fn least_squares_slope(points: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let (mut n, mut st, mut sf) = (0usize, 0.0, 0.0);
    for (t, f) in points.clone() {
        n += 1;
        st += t;
        sf += f;
    }
    if n < 2 {
        return 0.0;
    }
    let (mt, mf) = (st / n as f64, sf / n as f64);
    let (mut stt, mut stf) = (0.0, 0.0);
    for (t, f) in points {
        let dt = t - mt;
        stt += dt * dt;
        stf += dt * (f - mf);
    }
    if stt == 0.0 {
        0.0
    } else {
        stf / stt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaySettings {
    #[serde(rename = "threshold_hz_per_s")]
    pub threshold: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
}

impl Default for RelaySettings {
    fn default() -> Self {
        Self { threshold: 1.7, duration: 0.6 }
    }
}

impl RelaySettings {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.collect_errors("relay", &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub(crate) fn collect_errors(&self, prefix: &str, errs: &mut Vec<String>) {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            errs.push(format!("{prefix}.threshold_hz_per_s must be > 0, got {}", self.threshold));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            errs.push(format!("{prefix}.duration_s must be > 0, got {}", self.duration));
        }
    }

    pub fn exceeds(&self, rocof: f64) -> bool {
        rocof.abs() > self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelayState {
    pub above_timer: f64,
    pub tripped: bool,
    pub trip_time: Option<f64>,
}

/// Feeds one RoCoF sample taken at `t` into the relay.
///
/// The timer resets on any sample at or below the threshold; a trip is
/// latched once the timer reaches the duration.
pub fn relay_step(rs: &RelayState, rocof: f64, t: f64, dt: f64, settings: &RelaySettings) -> RelayState {
    if rs.tripped {
        return *rs;
    }
    let mut next = *rs;
    if settings.exceeds(rocof) {
        next.above_timer = (rs.above_timer + dt).min(settings.duration);
        if rs.above_timer + dt >= settings.duration - TIMER_EPS {
            next.tripped = true;
            next.trip_time = Some(t);
        }
    } else {
        next.above_timer = 0.0;
    }
    next
}

/// Index of the sample at which a relay with `settings` must trip on the
/// sampled trace, found by scanning every start position for a long
/// enough run of above-threshold samples.
pub fn brute_force_trip(trace: &[f64], dt: f64, settings: &RelaySettings) -> Option<usize> {
    let mut first: Option<usize> = None;
    for start in 0..trace.len() {
        if start > 0 && settings.exceeds(trace[start - 1]) {
            continue;
        }
        let mut end = start;
        while end < trace.len() && settings.exceeds(trace[end]) {
            let held = (end - start + 1) as f64 * dt;
            if held >= settings.duration - TIMER_EPS {
                first = Some(first.map_or(end, |f| f.min(end)));
                break;
            }
            end += 1;
        }
    }
    first
}

/// Runs the online relay over a whole trace and returns the trip index.
pub fn online_trip(trace: &[f64], dt: f64, settings: &RelaySettings) -> Option<usize> {
    let mut rs = RelayState::default();
    for (k, &r) in trace.iter().enumerate() {
        rs = relay_step(&rs, r, k as f64 * dt, dt, settings);
        if rs.tripped {
            return Some(k);
        }
    }
    None
}
