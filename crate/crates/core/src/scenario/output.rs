use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{MetricsSummary, RunResult, ScenarioSpec};
use crate::error::{Error, Result};
use crate::netmodel::MeasurementPoint;
use crate::protection::brute_force_trip;

pub const CSV_NAME: &str = "timeseries.csv";
pub const SUMMARY_NAME: &str = "summary.json";
pub const ECHO_NAME: &str = "spec.echo.json";

const POINT_PREFIX: [&str; 3] = ["start", "middle", "end"];

fn header() -> Vec<String> {
    let mut h = vec!["t_s".to_string()];
    for p in POINT_PREFIX {
        h.push(format!("{p}_v_pu"));
        h.push(format!("{p}_f_hz"));
        h.push(format!("{p}_rocof_hzps"));
    }
    h.extend(["pv_p_pu", "pv_q_pu", "pv_mode", "relay_tripped"].map(String::from));
    h
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory so readers never observe a half-written file.
pub(crate) fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub(crate) fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn timeseries_csv(r: &RunResult) -> Result<Vec<u8>> {
    let pcc = MeasurementPoint::End.index();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header())?;
    for s in &r.steps {
        let mut row = vec![s.t.to_string()];
        for i in 0..3 {
            row.push(s.v_mag[i].to_string());
            row.push(s.f_local[i].to_string());
            row.push(s.rocof[i].to_string());
        }
        row.push(s.pv_p.to_string());
        row.push(s.pv_q.to_string());
        row.push(s.mode.code().to_string());
        row.push(u8::from(s.relay_tripped[pcc]).to_string());
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes the time series, summary and scenario echo into `dir`.
pub fn write_outputs(r: &RunResult, m: &MetricsSummary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(dir, CSV_NAME, &timeseries_csv(r)?)?;
    write_atomic(dir, ECHO_NAME, &to_json_pretty(&r.spec)?)?;
    write_atomic(dir, SUMMARY_NAME, &to_json_pretty(m)?)?;
    Ok(())
}

/// What `check_outputs` compared.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub rows: usize,
    pub buses_checked: usize,
    pub trips: [Option<f64>; 3],
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Invalid(format!("{CSV_NAME} has no column {name}")))
}

fn parse_cell(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<f64> {
    rec.get(idx)
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| Error::Invalid(format!("{CSV_NAME} row {row}: bad value in column {idx}")))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Re-derives every relay decision in a finished output directory from its
/// RoCoF columns and compares it with the recorded trip flags and summary.
pub fn check_outputs(dir: &Path) -> Result<CheckReport> {
    let spec_text = fs::read_to_string(dir.join(ECHO_NAME))?;
    let spec = ScenarioSpec::from_json(&spec_text, dir)?;
    let summary: MetricsSummary = serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_NAME))?)?;

    let mut rdr = csv::Reader::from_path(dir.join(CSV_NAME))?;
    let headers = rdr.headers()?.clone();
    let t_col = column(&headers, "t_s")?;
    let mut rocof_cols = [0usize; 3];
    for (c, p) in rocof_cols.iter_mut().zip(POINT_PREFIX) {
        *c = column(&headers, &format!("{p}_rocof_hzps"))?;
    }
    let trip_col = column(&headers, "relay_tripped")?;

    let mut times = Vec::new();
    let mut rocof: [Vec<f64>; 3] = Default::default();
    let mut pcc_flags = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        times.push(parse_cell(&rec, t_col, row)?);
        for (i, &c) in rocof_cols.iter().enumerate() {
            rocof[i].push(parse_cell(&rec, c, row)?);
        }
        pcc_flags.push(parse_cell(&rec, trip_col, row)? != 0.0);
    }
    if times.len() != summary.steps {
        return Err(Error::OracleDisagreement(format!(
            "{CSV_NAME} has {} rows but the summary reports {} steps",
            times.len(),
            summary.steps
        )));
    }

    let mut trips = [None; 3];
    for point in MeasurementPoint::ALL {
        let i = point.index();
        let scanned = brute_force_trip(&rocof[i], spec.sim.dt, &spec.relay);
        let recorded = summary.bus(point);
        let scanned_time = scanned.map(|k| times[k]);
        let times_agree = match (scanned_time, recorded.trip_time_s) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        if scanned.is_some() != recorded.relay_tripped || !times_agree {
            return Err(Error::OracleDisagreement(format!(
                "{point}: window scan gives trip at {scanned_time:?}, summary says {:?}",
                recorded.trip_time_s
            )));
        }
        let max = rocof[i].iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        if !close(max, recorded.max_abs_rocof_hz_per_s) {
            return Err(Error::OracleDisagreement(format!(
                "{point}: max |RoCoF| {max} in {CSV_NAME}, {} in summary",
                recorded.max_abs_rocof_hz_per_s
            )));
        }
        if point == MeasurementPoint::End {
            let first_flag = pcc_flags.iter().position(|&f| f);
            let latched = first_flag.is_none_or(|k| pcc_flags[k..].iter().all(|&f| f));
            if first_flag != scanned || !latched {
                return Err(Error::OracleDisagreement(format!(
                    "relay_tripped column first set at row {first_flag:?}, window scan says {scanned:?}"
                )));
            }
        }
        trips[i] = scanned_time;
    }
    Ok(CheckReport { rows: times.len(), buses_checked: 3, trips })
}
