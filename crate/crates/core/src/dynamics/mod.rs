//! Fixed-step system dynamics: aggregate swing machine, scheduled source
//! dips and per-bus local frequency.

mod world;

pub use world::{Command, Controller, Measurement, StepRecord, World, WorldConfig};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwingParams {
    /// Inertia constant (s).
    pub h: f64,
    /// Damping (pu power per pu frequency deviation).
    pub d: f64,
    /// Nominal frequency (Hz).
    pub f_n: f64,
    /// Machine rating (pu on the feeder base).
    pub s_sys: f64,
}

impl Default for SwingParams {
    fn default() -> Self {
        Self { h: 4.0, d: 1.0, f_n: 50.0, s_sys: 100.0 }
    }
}

impl SwingParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.collect_errors("swing", &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub(crate) fn collect_errors(&self, prefix: &str, errs: &mut Vec<String>) {
        if !(self.h.is_finite() && self.h > 0.0) {
            errs.push(format!("{prefix}.h must be > 0, got {}", self.h));
        }
        if !(self.d.is_finite() && self.d >= 0.0) {
            errs.push(format!("{prefix}.d must be >= 0, got {}", self.d));
        }
        if self.f_n != 50.0 && self.f_n != 60.0 {
            errs.push(format!("{prefix}.f_n must be 50 or 60, got {}", self.f_n));
        }
        if !(self.s_sys.is_finite() && self.s_sys > 0.0) {
            errs.push(format!("{prefix}.s_sys must be > 0, got {}", self.s_sys));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SwingState {
    /// Frequency deviation (Hz).
    pub delta_f: f64,
    /// Rotor angle (rad).
    pub delta: f64,
    /// Mechanical power (pu), fixed after initialization.
    pub p_mech: f64,
}

fn frequency_rate(delta_f: f64, p_mech: f64, p_elec: f64, params: &SwingParams) -> f64 {
    params.f_n * (p_mech - p_elec - params.d * delta_f / params.f_n) / (2.0 * params.h * params.s_sys)
}

/// One Heun step of the swing equation with `p_elec` held over the step.
pub fn swing_step(state: &SwingState, params: &SwingParams, p_elec: f64, dt: f64) -> Result<SwingState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Invalid(format!("dt must be > 0, got {dt}")));
    }
    if ![state.delta_f, state.delta, state.p_mech, p_elec].iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("non-finite swing input".into()));
    }
    let k1 = frequency_rate(state.delta_f, state.p_mech, p_elec, params);
    let predicted = state.delta_f + dt * k1;
    let k2 = frequency_rate(predicted, state.p_mech, p_elec, params);
    let delta_f = state.delta_f + 0.5 * dt * (k1 + k2);
    let delta = state.delta + PI * dt * (state.delta_f + predicted);
    if delta_f.abs() >= params.f_n {
        return Err(Error::Numerical(format!("frequency deviation {delta_f} Hz out of bounds")));
    }
    Ok(SwingState { delta_f, delta, p_mech: state.p_mech })
}

/// Symmetrical dip on the source EMF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventSchedule {
    pub dip_start: f64,
    pub dip_clear: f64,
    /// Residual EMF magnitude during the dip (pu of nominal).
    pub dip_residual: f64,
}

impl Default for EventSchedule {
    fn default() -> Self {
        Self { dip_start: 0.0, dip_clear: 0.3, dip_residual: 0.4 }
    }
}

impl EventSchedule {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.collect_errors("events", &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub(crate) fn collect_errors(&self, prefix: &str, errs: &mut Vec<String>) {
        if !(self.dip_start.is_finite() && self.dip_start >= 0.0 && self.dip_start < self.dip_clear) {
            errs.push(format!(
                "{prefix}: need 0 <= dip_start < dip_clear, got {} and {}",
                self.dip_start, self.dip_clear
            ));
        }
        if !self.dip_clear.is_finite() {
            errs.push(format!("{prefix}.dip_clear must be finite"));
        }
        if !(self.dip_residual > 0.0 && self.dip_residual < 1.0) {
            errs.push(format!("{prefix}.dip_residual must lie in (0, 1), got {}", self.dip_residual));
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.dip_start && t < self.dip_clear
    }
}

/// Source EMF at time `t`, rotated by the machine angle `delta`.
pub fn apply_events(t: f64, schedule: Option<&EventSchedule>, nominal_emf: Complex64, delta: f64) -> Complex64 {
    let scale = match schedule {
        Some(s) if s.is_active(t) => s.dip_residual,
        _ => 1.0,
    };
    nominal_emf * scale * Complex64::from_polar(1.0, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 1e-3, duration: 2.0 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.collect_errors("sim", &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub(crate) fn collect_errors(&self, prefix: &str, errs: &mut Vec<String>) {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errs.push(format!("{prefix}.dt must be > 0, got {}", self.dt));
            return;
        }
        if !(self.duration.is_finite() && self.duration >= 1.0) {
            errs.push(format!("{prefix}.duration must be >= 1 s, got {}", self.duration));
            return;
        }
        let steps = self.duration / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            errs.push(format!(
                "{prefix}: duration {} is not a whole number of {} s steps",
                self.duration, self.dt
            ));
        }
    }

    pub fn step_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.dt)
    }
}

/// Maps step indices to times. When `1/dt` is a whole number the division
/// form keeps printed times free of accumulated round-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    per_second: Option<f64>,
}

impl TimeGrid {
    pub fn new(dt: f64) -> Self {
        let inv = 1.0 / dt;
        let per_second = ((inv - inv.round()).abs() < 1e-9 * inv && inv.round() >= 1.0).then(|| inv.round());
        Self { dt, per_second }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        match self.per_second {
            Some(n) => k as f64 / n,
            None => k as f64 * self.dt,
        }
    }
}

/// Wraps an angle difference into (−π, π].
pub fn unwrap_angle(d: f64) -> f64 {
    d - 2.0 * PI * ((d - PI) / (2.0 * PI)).ceil()
}

/// Local frequency of one bus from its phasor angle velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusFrequencyTracker {
    prev_angle: f64,
    /// Low-pass filtered angle velocity (rad/s).
    rate: f64,
    f_local: f64,
    tau: f64,
}

/// Default filter time constant (s).
pub const FREQUENCY_TAU: f64 = 0.02;

impl BusFrequencyTracker {
    pub fn new(initial_phasor: Complex64, f_n: f64, tau: f64) -> Result<Self> {
        if initial_phasor.norm() == 0.0 {
            return Err(Error::Numerical("zero-magnitude phasor".into()));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Invalid(format!("frequency filter tau must be > 0, got {tau}")));
        }
        Ok(Self { prev_angle: initial_phasor.arg(), rate: 0.0, f_local: f_n, tau })
    }

    pub fn frequency(&self) -> f64 {
        self.f_local
    }

    /// Feeds the bus phasor (relative to the machine frame) after a step of
    /// `dt` and returns the local frequency.
    pub fn update(&mut self, phasor: Complex64, system_f: f64, dt: f64) -> Result<f64> {
        let mag = phasor.norm();
        if mag.is_nan() || mag <= 0.0 {
            return Err(Error::Numerical("bus voltage collapsed to zero".into()));
        }
        let angle = phasor.arg();
        let raw = unwrap_angle(angle - self.prev_angle) / dt;
        self.prev_angle = angle;
        let alpha = -(-dt / self.tau).exp_m1();
        self.rate += alpha * (raw - self.rate);
        self.f_local = system_f + self.rate / (2.0 * PI);
        Ok(self.f_local)
    }
}

/// Free-function form of [`BusFrequencyTracker::update`].
pub fn local_frequency(tracker: &mut BusFrequencyTracker, bus_phasor: Complex64, system_f: f64, dt: f64) -> Result<f64> {
    tracker.update(bus_phasor, system_f, dt)
}
