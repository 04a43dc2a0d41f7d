use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pvhil");

fn pvhil(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("base.json"), r#"{"sim": {"dt": 0.001, "duration": 1.0}}"#).unwrap();
    dir
}

#[test]
fn run_then_check() {
    let w = workspace();
    let o = pvhil(&["run", "--scenario", "base.json", "--out", "out"], w.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("steps=1000"));
    for f in ["timeseries.csv", "summary.json", "spec.echo.json"] {
        assert!(w.path().join("out").join(f).is_file(), "{f}");
    }
    assert_eq!(code(&pvhil(&["check", "--out", "out"], w.path())), 0);
}

#[test]
fn split_run_over_tcp_and_unix_socket_is_byte_identical() {
    let w = workspace();
    assert_eq!(code(&pvhil(&["run", "--scenario", "base.json", "--out", "a"], w.path())), 0);
    let o = pvhil(&["run", "--scenario", "base.json", "--out", "b", "--split"], w.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sock = w.path().join("plant.sock");
    let listen = format!("unix:{}", sock.display());
    let o = pvhil(&["run", "--scenario", "base.json", "--out", "c", "--split", "--listen", &listen], w.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = fs::read(w.path().join("a/timeseries.csv")).unwrap();
    assert_eq!(a, fs::read(w.path().join("b/timeseries.csv")).unwrap());
    assert_eq!(a, fs::read(w.path().join("c/timeseries.csv")).unwrap());
    assert!(!sock.exists());
}

#[test]
fn sweep_writes_every_point_and_checks_clean() {
    let w = workspace();
    let o = pvhil(
        &["sweep", "--scenario", "base.json", "--param", "line_length_factor", "--values", "0.5,1,5", "--out", "sw"],
        w.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for v in ["0.5", "1", "5"] {
        assert!(w.path().join(format!("sw/line_length_factor_{v}/timeseries.csv")).is_file());
    }
    assert!(w.path().join("sw/sweep_summary.json").is_file());
    let o = pvhil(&["check", "--out", "sw"], w.path());
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
}

#[test]
fn validation_failures_exit_1() {
    let w = workspace();
    fs::write(w.path().join("bad.json"), r#"{"pv_generation_fraction": 3}"#).unwrap();
    let o = pvhil(&["run", "--scenario", "bad.json", "--out", "x"], w.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("pv_generation_fraction"));
    assert!(!w.path().join("x").exists());

    assert_eq!(code(&pvhil(&["run", "--scenario", "missing.json", "--out", "x"], w.path())), 1);
    fs::write(w.path().join("broken.json"), "{").unwrap();
    assert_eq!(code(&pvhil(&["run", "--scenario", "broken.json", "--out", "x"], w.path())), 1);
    let sweep = ["sweep", "--scenario", "base.json", "--param", "h", "--values", "1", "--out", "x"];
    assert_eq!(code(&pvhil(&sweep, w.path())), 1);
    let sweep = ["sweep", "--scenario", "base.json", "--param", "load_scale", "--values", "1,-2", "--out", "x"];
    assert_eq!(code(&pvhil(&sweep, w.path())), 1);
    let listen = ["run", "--scenario", "base.json", "--out", "x", "--listen", "127.0.0.1:0"];
    assert_eq!(code(&pvhil(&listen, w.path())), 1);
    assert_eq!(code(&pvhil(&["frobnicate"], w.path())), 1);
    assert_eq!(code(&pvhil(&["--help"], w.path())), 0);
}

#[test]
fn runtime_failures_exit_2() {
    let w = workspace();
    // Nobody listens on the port the listener was just released from.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = pvhil(&["controller", "--connect", &format!("127.0.0.1:{port}")], w.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn check_disagreement_exits_3() {
    let w = workspace();
    assert_eq!(code(&pvhil(&["run", "--scenario", "base.json", "--out", "out"], w.path())), 0);
    let summary_path = w.path().join("out/summary.json");
    let mut summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary_path).unwrap()).unwrap();
    summary["end"]["relay_tripped"] = true.into();
    summary["end"]["trip_time_s"] = 0.5.into();
    fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap()).unwrap();
    let o = pvhil(&["check", "--out", "out"], w.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn controller_with_wrong_scenario_is_refused() {
    let w = workspace();
    fs::write(w.path().join("other.json"), r#"{"sim": {"dt": 0.001, "duration": 1.0}, "load_scale": 0.5}"#).unwrap();
    let listener = pvhil::hilink::Listener::bind(&pvhil::hilink::Endpoint::parse("127.0.0.1:0").unwrap()).unwrap();
    let ep = listener.endpoint().unwrap().to_string();
    let child = Command::new(BIN)
        .args(["controller", "--connect", &ep, "--scenario", "other.json"])
        .stderr(std::process::Stdio::null())
        .current_dir(w.path())
        .spawn()
        .unwrap();
    let stream = listener.accept(pvhil::hilink::STEP_TIMEOUT).unwrap();
    let spec = pvhil::scenario::load_scenario(&w.path().join("base.json")).unwrap();
    let world = pvhil::dynamics::World::new(spec.world_config().unwrap()).unwrap();
    let link = pvhil::hilink::LinkConfig {
        role: pvhil::hilink::Role::Plant,
        version: pvhil::hilink::PROTOCOL_VERSION,
        dt: spec.sim.dt,
        step_count: spec.sim.step_count() as u64,
        digest: spec.digest_prefix(),
    };
    let err = pvhil::hilink::plant_serve(world, stream, &link, &spec).unwrap_err();
    assert!(err.to_string().contains("peer"), "{err}");
    let status = child.wait_with_output().unwrap().status;
    assert_eq!(status.code(), Some(2));
}
