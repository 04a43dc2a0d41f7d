use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::error::{Error, Result};
use crate::netmodel::MeasurementPoint;
use crate::protection::{brute_force_trip, RelaySettings};
use crate::pvplant::InverterMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusMetrics {
    pub bus: String,
    pub max_abs_rocof_hz_per_s: f64,
    pub relay_tripped: bool,
    pub trip_time_s: Option<f64>,
    pub voltage_nadir_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub digest: String,
    pub valid: bool,
    pub steps: usize,
    pub start: BusMetrics,
    pub middle: BusMetrics,
    pub end: BusMetrics,
    /// Lowest voltage over the measurement buses (pu).
    pub voltage_nadir_pu: f64,
    /// First return to normal inverter operation after leaving it (s).
    pub recovery_time_s: Option<f64>,
    pub final_mode: Option<InverterMode>,
    pub final_delta_f_hz: f64,
    /// Largest frequency deviation over the last tenth of the run (Hz).
    pub settled_abs_delta_f_hz: f64,
}

impl MetricsSummary {
    pub fn bus(&self, point: MeasurementPoint) -> &BusMetrics {
        match point {
            MeasurementPoint::Start => &self.start,
            MeasurementPoint::Middle => &self.middle,
            MeasurementPoint::End => &self.end,
        }
    }

    pub fn any_trip(&self) -> bool {
        MeasurementPoint::ALL.iter().any(|&p| self.bus(p).relay_tripped)
    }
}

/// Summarizes a run. Every relay decision in the trace is re-derived by a
/// brute-force window scan; any disagreement with the online relay is an
/// error.
pub fn compute_metrics(r: &RunResult, settings: &RelaySettings) -> Result<MetricsSummary> {
    let mut per_bus = Vec::with_capacity(3);
    for point in MeasurementPoint::ALL {
        let rocof = r.rocof(point);
        let online = r.online_trip_index(point);
        let scanned = brute_force_trip(&rocof, r.dt, settings);
        if online != scanned {
            return Err(Error::OracleDisagreement(format!(
                "{point} relay tripped at step {online:?} but the window scan says {scanned:?}"
            )));
        }
        per_bus.push(BusMetrics {
            bus: r.buses[point.index()].clone(),
            max_abs_rocof_hz_per_s: rocof.iter().fold(0.0, |m, x| m.max(x.abs())),
            relay_tripped: online.is_some(),
            trip_time_s: online.map(|k| r.steps[k].t),
            voltage_nadir_pu: r.voltage(point).into_iter().fold(f64::INFINITY, f64::min),
        });
    }
    let voltage_nadir_pu = per_bus.iter().map(|b| b.voltage_nadir_pu).fold(f64::INFINITY, f64::min);

    let mut left_normal = false;
    let mut recovery_time_s = None;
    for s in &r.steps {
        if s.mode != InverterMode::Normal {
            left_normal = true;
        } else if left_normal {
            recovery_time_s = Some(s.t);
            break;
        }
    }

    let tail = r.steps.len() - r.steps.len() / 10;
    let settled_abs_delta_f_hz = r.steps[tail.min(r.steps.len())..]
        .iter()
        .fold(0.0, |m: f64, s| m.max(s.delta_f.abs()));

    let [start, middle, end]: [BusMetrics; 3] = per_bus.try_into().expect("three buses");
    Ok(MetricsSummary {
        digest: r.digest.clone(),
        valid: r.valid,
        steps: r.steps.len(),
        start,
        middle,
        end,
        voltage_nadir_pu: if voltage_nadir_pu.is_finite() { voltage_nadir_pu } else { 0.0 },
        recovery_time_s,
        final_mode: r.steps.last().map(|s| s.mode),
        final_delta_f_hz: r.steps.last().map_or(0.0, |s| s.delta_f),
        settled_abs_delta_f_hz,
    })
}
