use std::ffi::{CStr, CString};
use std::ptr;

use pvhil_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 512];
    let n = unsafe { pvhil_last_error(buf.as_mut_ptr().cast(), buf.len()) };
    buf.truncate(n.min(511));
    String::from_utf8(buf).unwrap()
}

fn scenario(json: &str) -> (PvhilStatus, *mut PvhilScenario) {
    let text = CString::new(json).unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { pvhil_scenario_from_json(text.as_ptr(), ptr::null(), &mut s) };
    (st, s)
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(pvhil_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn default_run_end_to_end() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { pvhil_scenario_default(&mut s) }, PvhilStatus::Ok);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { pvhil_run(s, &mut r) }, PvhilStatus::Ok);
    assert_eq!(unsafe { pvhil_run_len(r) }, 2000);

    let mut max = [0.0; 3];
    for (p, m) in max.iter_mut().enumerate() {
        assert_eq!(unsafe { pvhil_run_max_rocof(r, p as u32, m) }, PvhilStatus::Ok);
    }
    assert!(max[2] > max[0] && max[0] > 0.0);

    let mut tripped = true;
    let mut when = 0.0;
    assert_eq!(unsafe { pvhil_run_trip(r, 2, &mut tripped, &mut when) }, PvhilStatus::Ok);
    assert!(!tripped);
    assert!(when.is_nan());

    let mut rec = 0.0;
    assert_eq!(unsafe { pvhil_run_recovery_time(r, &mut rec) }, PvhilStatus::Ok);
    assert!((rec - 0.6).abs() <= 0.002 + 1e-12);

    let mut n = 0usize;
    assert_eq!(
        unsafe { pvhil_run_series(r, PvhilSeries::Rocof as u32, 2, ptr::null_mut(), 0, &mut n) },
        PvhilStatus::Ok
    );
    assert_eq!(n, 2000);
    let mut rocof = vec![0.0; n];
    assert_eq!(
        unsafe { pvhil_run_series(r, PvhilSeries::Rocof as u32, 2, rocof.as_mut_ptr(), n, &mut n) },
        PvhilStatus::Ok
    );
    let series_max = rocof.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert_eq!(series_max, max[2]);

    let mut t = vec![0.0; 3];
    assert_eq!(
        unsafe { pvhil_run_series(r, PvhilSeries::Time as u32, 99, t.as_mut_ptr(), 3, ptr::null_mut()) },
        PvhilStatus::Ok
    );
    assert_eq!(t, vec![0.0, 0.001, 0.002]);

    let dir = tempfile::tempdir().unwrap();
    let d = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { pvhil_run_write(r, d.as_ptr()) }, PvhilStatus::Ok);
    assert!(dir.path().join("timeseries.csv").is_file());
    assert!(dir.path().join("summary.json").is_file());

    unsafe {
        pvhil_run_free(r);
        pvhil_scenario_free(s);
    }
}

#[test]
fn split_mode_matches_in_process() {
    let (st, a) = scenario(r#"{"sim": {"dt": 0.001, "duration": 1.0}}"#);
    assert_eq!(st, PvhilStatus::Ok);
    let (st, b) = scenario(r#"{"sim": {"dt": 0.001, "duration": 1.0}, "mode": "split"}"#);
    assert_eq!(st, PvhilStatus::Ok);
    let (mut ra, mut rb) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { pvhil_run(a, &mut ra) }, PvhilStatus::Ok);
    assert_eq!(unsafe { pvhil_run(b, &mut rb) }, PvhilStatus::Ok);
    let read = |r: *const PvhilRun| {
        let mut v = vec![0.0; 1000];
        let mut n = 0;
        let st = unsafe { pvhil_run_series(r, PvhilSeries::Frequency as u32, 1, v.as_mut_ptr(), v.len(), &mut n) };
        assert_eq!(st, PvhilStatus::Ok);
        assert_eq!(n, 1000);
        v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(read(ra), read(rb));
    unsafe {
        pvhil_run_free(ra);
        pvhil_run_free(rb);
        pvhil_scenario_free(a);
        pvhil_scenario_free(b);
    }
}

#[test]
fn validation_errors_carry_a_message() {
    let (st, s) = scenario(r#"{"load_scale": -2}"#);
    assert_eq!(st, PvhilStatus::Validation);
    assert!(s.is_null());
    assert!(last_error().contains("load_scale"), "{}", last_error());

    let (st, s) = scenario("{not json");
    assert_eq!(st, PvhilStatus::Validation);
    assert!(s.is_null());
}

#[test]
fn set_param_validates_and_keeps_old_value() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { pvhil_scenario_default(&mut s) }, PvhilStatus::Ok);
    let name = CString::new("pv_generation_fraction").unwrap();
    assert_eq!(unsafe { pvhil_scenario_set_param(s, name.as_ptr(), 0.5) }, PvhilStatus::Ok);
    assert_eq!(unsafe { pvhil_scenario_set_param(s, name.as_ptr(), 7.0) }, PvhilStatus::Validation);
    let bogus = CString::new("h").unwrap();
    assert_eq!(unsafe { pvhil_scenario_set_param(s, bogus.as_ptr(), 1.0) }, PvhilStatus::Validation);
    assert!(last_error().contains("cannot sweep"));
    unsafe { pvhil_scenario_free(s) };
}

#[test]
fn null_and_out_of_range_arguments() {
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { pvhil_run(ptr::null(), &mut r) }, PvhilStatus::InvalidArgument);
    assert!(r.is_null());
    assert_eq!(unsafe { pvhil_scenario_default(ptr::null_mut()) }, PvhilStatus::InvalidArgument);
    assert_eq!(unsafe { pvhil_run_len(ptr::null()) }, 0);
    let mut x = 0.0;
    assert_eq!(unsafe { pvhil_run_max_rocof(ptr::null(), 0, &mut x) }, PvhilStatus::InvalidArgument);
    unsafe {
        pvhil_run_free(ptr::null_mut());
        pvhil_scenario_free(ptr::null_mut());
    }

    let (st, s) = scenario(r#"{"sim": {"dt": 0.001, "duration": 1.0}}"#);
    assert_eq!(st, PvhilStatus::Ok);
    assert_eq!(unsafe { pvhil_run(s, &mut r) }, PvhilStatus::Ok);
    assert_eq!(unsafe { pvhil_run_max_rocof(r, 3, &mut x) }, PvhilStatus::InvalidArgument);
    assert_eq!(
        unsafe { pvhil_run_series(r, 17, 0, ptr::null_mut(), 0, ptr::null_mut()) },
        PvhilStatus::InvalidArgument
    );
    assert!(last_error().contains("series"));
    unsafe {
        pvhil_run_free(r);
        pvhil_scenario_free(s);
    }
}

#[test]
fn last_error_truncates_safely() {
    let (st, _) = scenario(r#"{"load_scale": -2, "pv_generation_fraction": 9}"#);
    assert_eq!(st, PvhilStatus::Validation);
    let full = unsafe { pvhil_last_error(ptr::null_mut(), 0) };
    assert!(full > 8);
    let mut small = [0x7fu8; 8];
    let n = unsafe { pvhil_last_error(small.as_mut_ptr().cast(), small.len()) };
    assert_eq!(n, full);
    assert_eq!(small[7], 0);
}
