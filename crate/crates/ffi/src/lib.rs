//! C ABI over the `pvhil` simulator.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a [`PvhilStatus`];
//! the message behind the most recent failure on the calling thread is
//! available from [`pvhil_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pvhil::netmodel::MeasurementPoint;
use pvhil::scenario::{
    compute_metrics, run_scenario, run_split_in_memory, write_outputs, MetricsSummary, RunMode, RunResult, ScenarioSpec,
    SweepParam,
};
use pvhil::Error;

/// Result of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvhilStatus {
    Ok = 0,
    /// Bad scenario or parameter values.
    Validation = 1,
    /// Simulation, transport or I/O failure.
    Runtime = 2,
    /// Relay oracle disagreed with the online relay.
    Oracle = 3,
    /// Null pointer, bad UTF-8 or out-of-range selector.
    InvalidArgument = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Time series selectable with [`pvhil_run_series`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvhilSeries {
    Time = 0,
    Voltage = 1,
    Frequency = 2,
    Rocof = 3,
}

/// Parsed, validated scenario.
pub struct PvhilScenario {
    spec: ScenarioSpec,
}

/// Finished run with its metrics.
pub struct PvhilRun {
    result: RunResult,
    metrics: MetricsSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PvhilStatus {
    match e.exit_code() {
        1 => PvhilStatus::Validation,
        3 => PvhilStatus::Oracle,
        _ => PvhilStatus::Runtime,
    }
}

struct Fail(PvhilStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(PvhilStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PvhilStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PvhilStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            PvhilStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

fn point_arg(point: u32) -> Result<MeasurementPoint, Fail> {
    MeasurementPoint::ALL
        .get(point as usize)
        .copied()
        .ok_or_else(|| invalid("measurement point must be 0 (start), 1 (middle) or 2 (end)"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pvhil_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// NUL-terminated) and returns its full length, or 0 when there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pvhil_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Scenario with every field at its default.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn pvhil_scenario_default(out: *mut *mut PvhilScenario) -> PvhilStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = Box::into_raw(Box::new(PvhilScenario { spec: ScenarioSpec::default() }));
        Ok(())
    })
}

/// Parses a JSON scenario. Relative feeder paths resolve against
/// `base_dir`, which may be null for the working directory.
///
/// # Safety
/// `json` must be a NUL-terminated string, `base_dir` null or one, and `out`
/// valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn pvhil_scenario_from_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut PvhilScenario,
) -> PvhilStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = ptr::null_mut();
        let text = str_arg(json, "json")?;
        let base = if base_dir.is_null() { "." } else { str_arg(base_dir, "base_dir")? };
        let spec = ScenarioSpec::from_json(text, Path::new(base))?;
        *out = Box::into_raw(Box::new(PvhilScenario { spec }));
        Ok(())
    })
}

/// Sets a sweepable parameter (`pv_generation_fraction`, `load_scale` or
/// `line_length_factor`). The scenario is left unchanged when the new value
/// fails validation.
///
/// # Safety
/// `scenario` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pvhil_scenario_set_param(
    scenario: *mut PvhilScenario,
    name: *const c_char,
    value: f64,
) -> PvhilStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| invalid("scenario is null"))?;
        let param: SweepParam = str_arg(name, "name")?.parse()?;
        let next = s.spec.with_param(param, value);
        next.validate()?;
        s.spec = next;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvhil_scenario_free(scenario: *mut PvhilScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs a scenario to completion and cross-checks its relay decisions.
/// Split-mode scenarios run the controller on a thread over an in-memory
/// link rather than spawning a process.
///
/// # Safety
/// `scenario` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn pvhil_run(scenario: *const PvhilScenario, out: *mut *mut PvhilRun) -> PvhilStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = ptr::null_mut();
        let s = scenario.as_ref().ok_or_else(|| invalid("scenario is null"))?;
        let result = match s.spec.mode {
            RunMode::InProcess => run_scenario(&s.spec)?,
            RunMode::Split => run_split_in_memory(&s.spec)?,
        };
        let metrics = compute_metrics(&result, &s.spec.relay)?;
        *out = Box::into_raw(Box::new(PvhilRun { result, metrics }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pvhil_run_free(run: *mut PvhilRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of recorded steps, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvhil_run_len(run: *const PvhilRun) -> usize {
    run.as_ref().map_or(0, |r| r.result.len())
}

/// Largest |RoCoF| seen at a measurement point (0 start, 1 middle, 2 end).
///
/// # Safety
/// `run` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn pvhil_run_max_rocof(run: *const PvhilRun, point: u32, out: *mut f64) -> PvhilStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| invalid("run is null"))?;
        let p = point_arg(point)?;
        let out = out.as_mut().ok_or_else(|| invalid("out is null"))?;
        *out = r.metrics.bus(p).max_abs_rocof_hz_per_s;
        Ok(())
    })
}

/// Whether the relay at a measurement point tripped, and when (NaN if not).
///
/// # Safety
/// `run` must be a live handle; `tripped` and `trip_time` valid writable
/// storage or null.
#[no_mangle]
pub unsafe extern "C" fn pvhil_run_trip(
    run: *const PvhilRun,
    point: u32,
    tripped: *mut bool,
    trip_time: *mut f64,
) -> PvhilStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| invalid("run is null"))?;
        let bus = r.metrics.bus(point_arg(point)?);
        if let Some(t) = tripped.as_mut() {
            *t = bus.relay_tripped;
        }
        if let Some(t) = trip_time.as_mut() {
            *t = bus.trip_time_s.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Time of the first return to normal inverter operation (NaN if none).
///
/// # Safety
/// `run` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn pvhil_run_recovery_time(run: *const PvhilRun, out: *mut f64) -> PvhilStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| invalid("run is null"))?;
        let out = out.as_mut().ok_or_else(|| invalid("out is null"))?;
        *out = r.metrics.recovery_time_s.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Copies up to `len` samples of a series into `buf` and stores the full
/// series length in `written`. `series` is a [`PvhilSeries`] value; `point`
/// is ignored for the time axis.
///
/// # Safety
/// `run` must be a live handle, `buf` null or `len` writable doubles, and
/// `written` null or valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn pvhil_run_series(
    run: *const PvhilRun,
    series: u32,
    point: u32,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> PvhilStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| invalid("run is null"))?.result;
        let data = match series {
            s if s == PvhilSeries::Time as u32 => r.times(),
            s if s == PvhilSeries::Voltage as u32 => r.voltage(point_arg(point)?),
            s if s == PvhilSeries::Frequency as u32 => r.frequency(point_arg(point)?),
            s if s == PvhilSeries::Rocof as u32 => r.rocof(point_arg(point)?),
            _ => return Err(invalid("unknown series selector")),
        };
        if !buf.is_null() {
            let n = data.len().min(len);
            ptr::copy_nonoverlapping(data.as_ptr(), buf, n);
        }
        if let Some(w) = written.as_mut() {
            *w = data.len();
        }
        Ok(())
    })
}

/// Writes the CSV time series, JSON summary and scenario echo to `dir`.
///
/// # Safety
/// `run` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pvhil_run_write(run: *const PvhilRun, dir: *const c_char) -> PvhilStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| invalid("run is null"))?;
        let dir = str_arg(dir, "dir")?;
        write_outputs(&r.result, &r.metrics, Path::new(dir))?;
        Ok(())
    })
}
