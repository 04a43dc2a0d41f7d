use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{EventSchedule, SimConfig, SwingParams, WorldConfig, FREQUENCY_TAU};
use crate::error::{Error, Result};
use crate::netmodel::{build_feeder, scale_line_length, FeederDescription, FeederModel};
use crate::protection::RelaySettings;
use crate::pvplant::{irradiance_for_fraction, mpp_power, InverterParams, ModuleParams, OperatingEnv};

/// Feeder given either as a path to a feeder file or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeederRef {
    Path(PathBuf),
    Inline(FeederDescription),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    InProcess,
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementCfg {
    /// Local-frequency filter time constant (s).
    pub frequency_tau_s: f64,
    /// RoCoF regression window (s).
    pub rocof_window_s: f64,
}

impl Default for MeasurementCfg {
    fn default() -> Self {
        Self { frequency_tau_s: FREQUENCY_TAU, rocof_window_s: 0.1 }
    }
}

/// Everything that defines one run. Missing fields take the values of the
/// baseline dip study at full PV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    /// `None` selects the bundled synthetic feeder.
    pub feeder: Option<FeederRef>,
    pub sim: SimConfig,
    /// `null` disables the dip.
    pub events: Option<EventSchedule>,
    pub pv_generation_fraction: f64,
    pub load_scale: f64,
    pub line_length_factor: f64,
    pub cell_temp_c: f64,
    pub relay: RelaySettings,
    pub inverter: InverterParams,
    pub pv_array: ModuleParams,
    pub swing: SwingParams,
    pub measurement: MeasurementCfg,
    pub mode: RunMode,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            feeder: None,
            sim: SimConfig::default(),
            events: Some(EventSchedule::default()),
            pv_generation_fraction: 1.0,
            load_scale: 1.0,
            line_length_factor: 1.0,
            cell_temp_c: 25.0,
            relay: RelaySettings::default(),
            inverter: InverterParams::default(),
            pv_array: ModuleParams::default(),
            swing: SwingParams::default(),
            measurement: MeasurementCfg::default(),
            mode: RunMode::InProcess,
        }
    }
}

impl ScenarioSpec {
    /// Parses a scenario document; a relative feeder path is taken relative
    /// to `base_dir` and loaded inline.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec: ScenarioSpec = serde_json::from_str(text)?;
        spec.resolve(base_dir)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Replaces a feeder path by the feeder it names.
    fn resolve(&mut self, base_dir: &Path) -> Result<()> {
        if let Some(FeederRef::Path(p)) = &self.feeder {
            let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
            if !path.is_file() {
                return Err(Error::Validation(vec![format!("feeder file {} does not exist", path.display())]));
            }
            self.feeder = Some(FeederRef::Inline(FeederDescription::load(&path)?));
        }
        Ok(())
    }

    /// Checks every invariant and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.sim.collect_errors("sim", &mut errs);
        if let Some(ev) = &self.events {
            ev.collect_errors("events", &mut errs);
        }
        self.relay.collect_errors("relay", &mut errs);
        self.inverter.collect_errors("inverter", &mut errs);
        self.pv_array.collect_errors("pv_array", &mut errs);
        self.swing.collect_errors("swing", &mut errs);
        if !(0.0..=1.0).contains(&self.pv_generation_fraction) {
            errs.push(format!("pv_generation_fraction must lie in [0, 1], got {}", self.pv_generation_fraction));
        }
        if !(self.load_scale.is_finite() && self.load_scale >= 0.0) {
            errs.push(format!("load_scale must be >= 0, got {}", self.load_scale));
        }
        if !(self.line_length_factor.is_finite() && self.line_length_factor > 0.0) {
            errs.push(format!("line_length_factor must be > 0, got {}", self.line_length_factor));
        }
        if !(-40.0..=90.0).contains(&self.cell_temp_c) {
            errs.push(format!("cell_temp_c must lie in [-40, 90], got {}", self.cell_temp_c));
        }
        let m = &self.measurement;
        if !(m.frequency_tau_s.is_finite() && m.frequency_tau_s > 0.0) {
            errs.push(format!("measurement.frequency_tau_s must be > 0, got {}", m.frequency_tau_s));
        }
        if !(m.rocof_window_s.is_finite() && m.rocof_window_s >= 2.0 * self.sim.dt) {
            errs.push(format!(
                "measurement.rocof_window_s must span at least two steps, got {}",
                m.rocof_window_s
            ));
        }
        match &self.feeder {
            Some(FeederRef::Path(p)) if !p.is_file() => {
                errs.push(format!("feeder file {} does not exist", p.display()));
            }
            Some(FeederRef::Inline(desc)) => {
                if let Err(e) = build_feeder(desc) {
                    errs.push(format!("feeder: {e}"));
                }
            }
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn feeder_model(&self) -> Result<FeederModel> {
        let base = match &self.feeder {
            None => FeederDescription::builtin(),
            Some(FeederRef::Inline(d)) => d.clone(),
            Some(FeederRef::Path(p)) => FeederDescription::load(p)?,
        };
        scale_line_length(&build_feeder(&base)?, self.line_length_factor)
    }

    /// Array output at the configured generation fraction (pu).
    pub fn available_pv_power(&self) -> Result<f64> {
        let irradiance = irradiance_for_fraction(&self.pv_array, self.pv_generation_fraction, self.cell_temp_c)?;
        let env = OperatingEnv { irradiance, cell_temp: self.cell_temp_c };
        env.validate()?;
        Ok(mpp_power(&self.pv_array, &env))
    }

    pub fn world_config(&self) -> Result<WorldConfig> {
        Ok(WorldConfig {
            model: self.feeder_model()?,
            swing: self.swing,
            events: self.events,
            dt: self.sim.dt,
            load_scale: self.load_scale,
            p_avail: self.available_pv_power()?,
            inverter: self.inverter,
            relay: self.relay,
            frequency_tau: self.measurement.frequency_tau_s,
            rocof_window: self.measurement.rocof_window_s,
        })
    }

    /// Canonical JSON used for hashing; the run mode does not change the
    /// trajectory, so it is normalized away.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.mode = RunMode::InProcess;
        serde_json::to_string(&c).expect("scenario serializes")
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_json().as_bytes()).into()
    }

    /// First eight digest bytes, as carried in the handshake.
    pub fn digest_prefix(&self) -> [u8; 8] {
        self.digest()[..8].try_into().expect("8 bytes")
    }

    pub fn digest_hex(&self) -> String {
        self.digest().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn get_param(&self, p: SweepParam) -> f64 {
        match p {
            SweepParam::PvGenerationFraction => self.pv_generation_fraction,
            SweepParam::LoadScale => self.load_scale,
            SweepParam::LineLengthFactor => self.line_length_factor,
        }
    }

    pub fn with_param(&self, p: SweepParam, value: f64) -> Self {
        let mut s = self.clone();
        match p {
            SweepParam::PvGenerationFraction => s.pv_generation_fraction = value,
            SweepParam::LoadScale => s.load_scale = value,
            SweepParam::LineLengthFactor => s.line_length_factor = value,
        }
        s
    }
}

/// Reads, resolves and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    if !path.is_file() {
        return Err(Error::Validation(vec![format!("scenario file {} does not exist", path.display())]));
    }
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    ScenarioSpec::from_json(&text, base)
}

/// Scenario fields a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PvGenerationFraction,
    LoadScale,
    LineLengthFactor,
}

impl SweepParam {
    pub const ALL: [SweepParam; 3] =
        [SweepParam::PvGenerationFraction, SweepParam::LoadScale, SweepParam::LineLengthFactor];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::PvGenerationFraction => "pv_generation_fraction",
            SweepParam::LoadScale => "load_scale",
            SweepParam::LineLengthFactor => "line_length_factor",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            Error::Invalid(format!(
                "cannot sweep `{s}`; choose one of pv_generation_fraction, load_scale, line_length_factor"
            ))
        })
    }
}
