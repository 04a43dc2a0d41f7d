//! Aggregated PV park: array output from irradiance and cell temperature,
//! and the grid-following inverter with its low-voltage ride-through mode
//! machine.

mod controller;

pub use controller::LocalController;

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Irradiance at standard test conditions (W/m²).
pub const G_STC: f64 = 1000.0;
/// Cell temperature at standard test conditions (°C).
pub const T_STC: f64 = 25.0;
/// Upper clamp on array output relative to `p_stc`.
pub const MPP_CLAMP: f64 = 1.05;
/// Voltage floor used when converting power to current (pu).
pub const VOLTAGE_FLOOR: f64 = 0.1;

/// Array nameplate data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleParams {
    /// Rating at standard test conditions (pu on the feeder base).
    pub p_stc: f64,
    /// Power temperature coefficient (1/K).
    pub gamma: f64,
}

impl Default for ModuleParams {
    fn default() -> Self {
        Self { p_stc: 0.15, gamma: -0.004 }
    }
}

impl ModuleParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.collect_errors("pv_array", &mut errs);
        errors_to_result(errs)
    }

    pub(crate) fn collect_errors(&self, prefix: &str, errs: &mut Vec<String>) {
        if !(self.p_stc.is_finite() && self.p_stc > 0.0) {
            errs.push(format!("{prefix}.p_stc must be > 0, got {}", self.p_stc));
        }
        if !(self.gamma > -0.01 && self.gamma < 0.0) {
            errs.push(format!("{prefix}.gamma must lie in (-0.01, 0), got {}", self.gamma));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingEnv {
    /// W/m².
    pub irradiance: f64,
    /// °C.
    pub cell_temp: f64,
}

impl OperatingEnv {
    pub fn validate(&self) -> Result<()> {
        if !(self.irradiance.is_finite() && self.irradiance >= 0.0) {
            return Err(Error::Invalid(format!("irradiance must be >= 0, got {}", self.irradiance)));
        }
        if !(-40.0..=90.0).contains(&self.cell_temp) {
            return Err(Error::Invalid(format!(
                "cell temperature must lie in [-40, 90] °C, got {}",
                self.cell_temp
            )));
        }
        Ok(())
    }
}

/// Maximum-power-point output of the array (pu).
pub fn mpp_power(mp: &ModuleParams, env: &OperatingEnv) -> f64 {
    let p = mp.p_stc * (env.irradiance / G_STC) * (1.0 + mp.gamma * (env.cell_temp - T_STC));
    p.clamp(0.0, mp.p_stc * MPP_CLAMP)
}

/// Irradiance that makes the array deliver `fraction · p_stc` at `cell_temp`.
pub fn irradiance_for_fraction(mp: &ModuleParams, fraction: f64, cell_temp: f64) -> Result<f64> {
    let derate = 1.0 + mp.gamma * (cell_temp - T_STC);
    if !(0.0..=MPP_CLAMP).contains(&fraction) {
        return Err(Error::Invalid(format!("generation fraction {fraction} out of range")));
    }
    if derate <= 0.0 {
        return Err(Error::Invalid(format!("array produces nothing at {cell_temp} °C")));
    }
    Ok(fraction * G_STC / derate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InverterParams {
    /// Rating (pu on the feeder base); also the rated current at 1 pu voltage.
    pub s_rated: f64,
    /// Current limit in multiples of rated current.
    pub i_max: f64,
    pub v_enter: f64,
    pub v_exit: f64,
    /// Time the voltage must stay at or above `v_exit` before recovery (s).
    pub exit_hold: f64,
    /// Reactive current per pu voltage deviation (multiples of rated current).
    pub k_q: f64,
    /// Active-power recovery rate (pu/s). When absent, the ramp takes
    /// `recovery_ramp_s` to restore the pre-fault power.
    pub p_ramp: Option<f64>,
    pub recovery_ramp_s: f64,
    /// During ride-through, active current is blocked while the PCC voltage
    /// is below this level (pu). Above it the inverter uses whatever current
    /// the reactive injection leaves, limited by the available array power.
    pub active_block_voltage: f64,
}

impl Default for InverterParams {
    fn default() -> Self {
        Self {
            s_rated: 0.15,
            i_max: 1.1,
            v_enter: 0.9,
            v_exit: 0.9,
            exit_hold: 0.02,
            k_q: 2.0,
            p_ramp: None,
            recovery_ramp_s: 0.28,
            active_block_voltage: 0.7,
        }
    }
}

impl InverterParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.collect_errors("inverter", &mut errs);
        errors_to_result(errs)
    }

    pub(crate) fn collect_errors(&self, prefix: &str, errs: &mut Vec<String>) {
        let positive = |name: &str, v: f64, errs: &mut Vec<String>| {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{prefix}.{name} must be > 0, got {v}"));
            }
        };
        positive("s_rated", self.s_rated, errs);
        positive("k_q", self.k_q, errs);
        positive("recovery_ramp_s", self.recovery_ramp_s, errs);
        if !(self.i_max.is_finite() && self.i_max >= 1.0) {
            errs.push(format!("{prefix}.i_max must be >= 1, got {}", self.i_max));
        }
        if !(self.v_enter > 0.0 && self.v_enter <= 1.0) {
            errs.push(format!("{prefix}.v_enter must lie in (0, 1], got {}", self.v_enter));
        }
        if !(self.v_exit > 0.0 && self.v_exit.is_finite()) {
            errs.push(format!("{prefix}.v_exit must be > 0, got {}", self.v_exit));
        }
        if !(self.exit_hold.is_finite() && self.exit_hold >= 0.0) {
            errs.push(format!("{prefix}.exit_hold must be >= 0, got {}", self.exit_hold));
        }
        if !(self.active_block_voltage.is_finite() && self.active_block_voltage >= 0.0) {
            errs.push(format!(
                "{prefix}.active_block_voltage must be >= 0, got {}",
                self.active_block_voltage
            ));
        }
        if let Some(r) = self.p_ramp {
            positive("p_ramp", r, errs);
        }
    }

    /// Rated current (pu on the feeder base).
    pub fn i_rated(&self) -> f64 {
        self.s_rated
    }

    /// Current magnitude the inverter may never exceed (pu).
    pub fn current_limit(&self) -> f64 {
        self.i_max * self.i_rated()
    }

    /// Recovery ramp rate for a given pre-fault power (pu/s).
    pub fn ramp_rate(&self, p_prefault: f64) -> f64 {
        self.p_ramp.unwrap_or(p_prefault / self.recovery_ramp_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverterMode {
    Normal,
    Lvrt,
    Recovery,
    Isolated,
}

impl InverterMode {
    /// Numeric code used in CSV output and on the wire.
    pub fn code(self) -> u8 {
        match self {
            InverterMode::Normal => 0,
            InverterMode::Lvrt => 1,
            InverterMode::Recovery => 2,
            InverterMode::Isolated => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => InverterMode::Normal,
            1 => InverterMode::Lvrt,
            2 => InverterMode::Recovery,
            3 => InverterMode::Isolated,
            _ => return None,
        })
    }

    /// Whether the mode machine allows `self -> next` in a single transition.
    pub fn can_transition_to(self, next: InverterMode) -> bool {
        use InverterMode::*;
        matches!(
            (self, next),
            (Normal, Lvrt) | (Lvrt, Recovery) | (Recovery, Normal) | (Normal | Lvrt | Recovery, Isolated)
        ) || self == next
    }
}

impl fmt::Display for InverterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InverterMode::Normal => "normal",
            InverterMode::Lvrt => "lvrt",
            InverterMode::Recovery => "recovery",
            InverterMode::Isolated => "isolated",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterState {
    pub mode: InverterMode,
    /// Active power reference (pu).
    pub p_ref: f64,
    /// Reactive power reference (pu, positive = injection).
    pub q_ref: f64,
    pub p_prefault: f64,
    pub recovery_started: Option<f64>,
    /// Start of the current stretch with the voltage at or above `v_exit`.
    pub exit_since: Option<f64>,
}

impl InverterState {
    /// Normal operation delivering `p` (pu).
    pub fn normal(p: f64) -> Self {
        Self {
            mode: InverterMode::Normal,
            p_ref: p,
            q_ref: 0.0,
            p_prefault: p,
            recovery_started: None,
            exit_since: None,
        }
    }
}

/// Current setpoint in the frame of the PCC voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurrentRef {
    /// In phase with the voltage (pu).
    pub i_p: f64,
    /// Lagging the voltage by 90°, i.e. reactive injection (pu).
    pub i_q: f64,
}

impl CurrentRef {
    pub const ZERO: CurrentRef = CurrentRef { i_p: 0.0, i_q: 0.0 };

    pub fn magnitude(&self) -> f64 {
        self.i_p.hypot(self.i_q)
    }

    /// Phasor aligned with a voltage whose angle is `v_angle`.
    pub fn phasor(&self, v_angle: f64) -> Complex64 {
        Complex64::new(self.i_p, -self.i_q) * Complex64::from_polar(1.0, v_angle)
    }
}

/// Relative slack when deciding that the recovery ramp has completed.
const RAMP_DONE_TOLERANCE: f64 = 1e-9;

/// Advances the LVRT mode machine for a PCC voltage observed at time `t`.
pub fn lvrt_transition(st: &InverterState, v_pcc: f64, t: f64, params: &InverterParams) -> InverterState {
    let mut next = *st;
    match st.mode {
        InverterMode::Isolated => {}
        InverterMode::Normal => {
            if v_pcc < params.v_enter {
                next.mode = InverterMode::Lvrt;
                next.p_prefault = st.p_ref;
                next.exit_since = None;
            }
        }
        InverterMode::Lvrt => {
            if v_pcc >= params.v_exit {
                let since = *next.exit_since.get_or_insert(t);
                if t - since >= params.exit_hold - 1e-12 {
                    next.mode = InverterMode::Recovery;
                    next.recovery_started = Some(t);
                    next.exit_since = None;
                    next.p_ref = 0.0;
                }
            } else {
                next.exit_since = None;
            }
        }
        InverterMode::Recovery => {
            let started = st.recovery_started.unwrap_or(t);
            let ramp = params.ramp_rate(st.p_prefault) * (t - started);
            if ramp >= st.p_prefault * (1.0 - RAMP_DONE_TOLERANCE) {
                next.mode = InverterMode::Normal;
                next.recovery_started = None;
                next.p_ref = st.p_prefault;
            } else {
                next.p_ref = ramp.max(0.0);
            }
        }
    }
    next
}

/// Current setpoint for the present mode and PCC voltage magnitude.
pub fn current_reference(st: &InverterState, v_pcc: f64, params: &InverterParams, p_avail: f64) -> CurrentRef {
    let v = v_pcc.max(VOLTAGE_FLOOR);
    let cap = params.current_limit();
    match st.mode {
        InverterMode::Isolated => CurrentRef::ZERO,
        InverterMode::Normal => CurrentRef {
            i_p: (p_avail.min(params.s_rated) / v).min(cap),
            i_q: 0.0,
        },
        InverterMode::Recovery => CurrentRef {
            i_p: (st.p_ref.min(p_avail) / v).min(cap),
            i_q: 0.0,
        },
        InverterMode::Lvrt => {
            let iq_rel = (params.k_q * (params.v_enter - v_pcc).max(0.0)).min(params.i_max);
            let ip_rel = if v_pcc < params.active_block_voltage {
                0.0
            } else {
                let headroom = (params.i_max * params.i_max - iq_rel * iq_rel).max(0.0).sqrt();
                headroom.min(p_avail.max(0.0) / params.i_rated())
            };
            CurrentRef {
                i_p: ip_rel * params.i_rated(),
                i_q: iq_rel * params.i_rated(),
            }
        }
    }
}

/// Relay trip: the inverter is disconnected for good.
pub fn apply_trip(st: &InverterState) -> InverterState {
    InverterState {
        mode: InverterMode::Isolated,
        p_ref: 0.0,
        q_ref: 0.0,
        recovery_started: None,
        exit_since: None,
        ..*st
    }
}

fn errors_to_result(errs: Vec<String>) -> Result<()> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(errs))
    }
}
