use std::io::{Read, Write};
use std::thread;
use std::time::Duration;

use proptest::prelude::*;

use pvhil::dynamics::World;
use pvhil::hilink::{
    connect, controller_run, decode_frame, encode_frame, error_code, pipe_pair, plant_serve, read_frame,
    write_frame, CmdMsg, Endpoint, Hello, LinkConfig, Listener, MeasMsg, Message, Role, PROTOCOL_VERSION,
    STEP_TIMEOUT,
};
use pvhil::pvplant::{InverterMode, LocalController};
use pvhil::scenario::{run_scenario, run_split_in_memory, run_split_over, RunResult, ScenarioSpec};
use pvhil::Error;

fn short_spec() -> ScenarioSpec {
    ScenarioSpec::from_json(r#"{"sim": {"dt": 0.001, "duration": 1.0}}"#, ".".as_ref()).unwrap()
}

fn link(spec: &ScenarioSpec, role: Role) -> LinkConfig {
    LinkConfig {
        role,
        version: PROTOCOL_VERSION,
        dt: spec.sim.dt,
        step_count: spec.sim.step_count() as u64,
        digest: spec.digest_prefix(),
    }
}

fn local(spec: &ScenarioSpec) -> LocalController {
    LocalController::new(spec.inverter, spec.available_pv_power().unwrap(), spec.relay, spec.sim.dt)
}

fn assert_bit_identical(a: &RunResult, b: &RunResult) {
    assert_eq!(a.steps.len(), b.steps.len());
    assert!(a.valid && b.valid);
    for (k, (x, y)) in a.steps.iter().zip(&b.steps).enumerate() {
        let same = x.t.to_bits() == y.t.to_bits()
            && x.pv_p.to_bits() == y.pv_p.to_bits()
            && x.pv_q.to_bits() == y.pv_q.to_bits()
            && x.mode == y.mode
            && x.relay_tripped == y.relay_tripped
            && (0..3).all(|i| {
                x.v_mag[i].to_bits() == y.v_mag[i].to_bits()
                    && x.f_local[i].to_bits() == y.f_local[i].to_bits()
                    && x.rocof[i].to_bits() == y.rocof[i].to_bits()
            });
        assert!(same, "step {k} differs: {x:?} vs {y:?}");
    }
}

fn split_over_socket(spec: &ScenarioSpec, endpoint: &Endpoint) -> RunResult {
    let listener = Listener::bind(endpoint).unwrap();
    let ep = listener.endpoint().unwrap();
    let connector = thread::spawn(move || connect(&ep, STEP_TIMEOUT).unwrap());
    let plant = listener.accept(STEP_TIMEOUT).unwrap();
    let controller = connector.join().unwrap();
    run_split_over(spec, plant, controller).unwrap()
}

#[test]
fn split_over_pipe_matches_in_process() {
    let spec = short_spec();
    assert_bit_identical(&run_scenario(&spec).unwrap(), &run_split_in_memory(&spec).unwrap());
}

#[test]
fn split_over_tcp_matches_in_process() {
    let spec = short_spec();
    let r = split_over_socket(&spec, &Endpoint::parse("127.0.0.1:0").unwrap());
    assert_bit_identical(&run_scenario(&spec).unwrap(), &r);
}

#[test]
fn split_over_unix_socket_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let ep = Endpoint::Unix(dir.path().join("plant.sock"));
    let spec = short_spec();
    let r = split_over_socket(&spec, &ep);
    assert_bit_identical(&run_scenario(&spec).unwrap(), &r);
}

#[test]
fn zero_step_session_is_hello_then_bye() {
    let spec = short_spec();
    let mut cfg = link(&spec, Role::Plant);
    cfg.step_count = 0;
    let (plant, mut peer) = pipe_pair(Duration::from_secs(5));
    let world = World::new(spec.world_config().unwrap()).unwrap();
    let server = thread::spawn(move || plant_serve(world, plant, &cfg, &short_spec()));
    let hello = match read_frame(&mut peer).unwrap() {
        Message::Hello(h) => h,
        other => panic!("expected HELLO, got {other:?}"),
    };
    assert_eq!(hello.step_count, 0);
    write_frame(&mut peer, &Message::HelloAck(hello)).unwrap();
    assert_eq!(read_frame(&mut peer).unwrap(), Message::Bye);
    let r = server.join().unwrap().unwrap();
    assert!(r.is_empty() && r.valid);
}

#[test]
fn handshake_mismatches_are_refused_with_codes() {
    let spec = short_spec();
    let good = link(&spec, Role::Plant).hello();
    let cases = [
        (Hello { version: 999, ..good }, error_code::VERSION),
        (Hello { dt: 0.002, ..good }, error_code::DT),
        (Hello { step_count: good.step_count + 1, ..good }, error_code::STEP_COUNT),
        (Hello { digest: [0; 8], ..good }, error_code::DIGEST),
    ];
    for (hello, code) in cases {
        let (mut plant, ctl_end) = pipe_pair(Duration::from_secs(5));
        let cfg = link(&spec, Role::Controller);
        let mut ctl = local(&spec);
        let peer = thread::spawn(move || controller_run(ctl_end, &cfg, &mut ctl));
        write_frame(&mut plant, &Message::Hello(hello)).unwrap();
        assert_eq!(read_frame(&mut plant).unwrap(), Message::Error { code });
        let err = peer.join().unwrap().unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }
}

#[test]
fn plant_rejects_version_999_controller() {
    let spec = short_spec();
    let (plant, ctl_end) = pipe_pair(Duration::from_secs(5));
    let mut cfg = link(&spec, Role::Controller);
    cfg.version = 999;
    let mut ctl = local(&spec);
    let peer = thread::spawn(move || controller_run(ctl_end, &cfg, &mut ctl));
    let world = World::new(spec.world_config().unwrap()).unwrap();
    let err = plant_serve(world, plant, &link(&spec, Role::Plant), &spec).unwrap_err();
    match err {
        Error::SessionAborted { partial, .. } => {
            assert!(partial.is_empty());
            assert!(!partial.valid);
        }
        other => panic!("{other}"),
    }
    assert!(peer.join().unwrap().is_err());
}

/// Controller stand-in that answers correctly for `good` steps and then
/// misbehaves as directed.
fn scripted_peer(
    mut s: impl Read + Write,
    good: u64,
    misbehave: impl FnOnce(&mut dyn ReadWrite, MeasMsg),
) -> Option<Message> {
    let hello = match read_frame(&mut s).unwrap() {
        Message::Hello(h) => h,
        other => panic!("{other:?}"),
    };
    write_frame(&mut s, &Message::HelloAck(hello)).unwrap();
    for k in 0.. {
        let m = match read_frame(&mut s).unwrap() {
            Message::Meas(m) => m,
            other => panic!("{other:?}"),
        };
        assert_eq!(m.seq, k);
        if k == good {
            misbehave(&mut s, m);
            break;
        }
        let cmd = CmdMsg { seq: m.seq, i_p_ref: 0.0, i_q_ref: 0.0, breaker_open: false, mode: InverterMode::Normal };
        write_frame(&mut s, &Message::Cmd(cmd)).unwrap();
    }
    read_frame(&mut s).ok()
}

trait ReadWrite: Read + Write {}
impl<T: Read + Write> ReadWrite for T {}

fn serve_against(
    good: u64,
    timeout: Duration,
    misbehave: impl FnOnce(&mut dyn ReadWrite, MeasMsg) + Send + 'static,
) -> (Error, Option<Message>) {
    let spec = short_spec();
    let (plant, peer_end) = pipe_pair(timeout);
    let peer = thread::spawn(move || scripted_peer(peer_end, good, misbehave));
    let world = World::new(spec.world_config().unwrap()).unwrap();
    let err = plant_serve(world, plant, &link(&spec, Role::Plant), &spec).unwrap_err();
    (err, peer.join().unwrap())
}

fn partial_len(e: &Error) -> usize {
    match e {
        Error::SessionAborted { partial, .. } => {
            assert!(!partial.valid);
            partial.len()
        }
        other => panic!("expected an aborted session, got {other}"),
    }
}

#[test]
fn wrong_command_sequence_aborts_with_partial_result() {
    let (err, reply) = serve_against(7, Duration::from_secs(5), |s, m| {
        let cmd = CmdMsg { seq: m.seq + 1, i_p_ref: 0.0, i_q_ref: 0.0, breaker_open: false, mode: InverterMode::Normal };
        write_frame(s, &Message::Cmd(cmd)).unwrap();
    });
    assert_eq!(partial_len(&err), 7);
    assert_eq!(reply, Some(Message::Error { code: error_code::SEQUENCE }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn oversized_current_command_is_refused() {
    let (err, _) = serve_against(3, Duration::from_secs(5), |s, m| {
        let cmd = CmdMsg { seq: m.seq, i_p_ref: 5.0, i_q_ref: 0.0, breaker_open: false, mode: InverterMode::Normal };
        write_frame(s, &Message::Cmd(cmd)).unwrap();
    });
    assert_eq!(partial_len(&err), 3);
}

#[test]
fn dropped_connection_aborts_with_partial_result() {
    let (err, _) = serve_against(42, Duration::from_secs(5), |_, _| {});
    assert_eq!(partial_len(&err), 42);
}

#[test]
fn silent_controller_times_out() {
    let (err, _) = serve_against(5, Duration::from_millis(200), |_, _| thread::sleep(Duration::from_millis(600)));
    assert_eq!(partial_len(&err), 5);
    match err {
        Error::SessionAborted { reason, .. } => assert!(reason.contains("timed out"), "{reason}"),
        _ => unreachable!(),
    }
}

#[test]
fn garbage_from_plant_is_answered_with_malformed() {
    let spec = short_spec();
    let (mut plant, ctl_end) = pipe_pair(Duration::from_secs(5));
    let cfg = link(&spec, Role::Controller);
    let mut ctl = local(&spec);
    let peer = thread::spawn(move || controller_run(ctl_end, &cfg, &mut ctl));
    plant.write_all(&[3, 0, 0, 0, 0x7f, 1, 2]).unwrap();
    assert_eq!(read_frame(&mut plant).unwrap(), Message::Error { code: error_code::MALFORMED });
    assert!(peer.join().unwrap().is_err());
}

#[test]
fn measurement_out_of_order_is_rejected_by_controller() {
    let spec = short_spec();
    let (mut plant, ctl_end) = pipe_pair(Duration::from_secs(5));
    let cfg = link(&spec, Role::Controller);
    let mut ctl = local(&spec);
    let peer = thread::spawn(move || controller_run(ctl_end, &cfg, &mut ctl));
    write_frame(&mut plant, &Message::Hello(cfg.hello())).unwrap();
    assert!(matches!(read_frame(&mut plant).unwrap(), Message::HelloAck(_)));
    let m = MeasMsg { seq: 1, t: 0.0, v_mag: 1.0, v_ang: 0.0, f_local: 50.0, rocof: 0.0 };
    write_frame(&mut plant, &Message::Meas(m)).unwrap();
    assert_eq!(read_frame(&mut plant).unwrap(), Message::Error { code: error_code::SEQUENCE });
    assert!(peer.join().unwrap().is_err());
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn mode() -> impl Strategy<Value = InverterMode> {
    prop::sample::select(vec![InverterMode::Normal, InverterMode::Lvrt, InverterMode::Recovery, InverterMode::Isolated])
}

fn hello() -> impl Strategy<Value = Hello> {
    (any::<u64>(), finite(), any::<u64>(), any::<[u8; 8]>())
        .prop_map(|(version, dt, step_count, digest)| Hello { version, dt, step_count, digest })
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        hello().prop_map(Message::Hello),
        hello().prop_map(Message::HelloAck),
        (any::<u64>(), finite(), finite(), finite(), finite(), finite()).prop_map(|(seq, t, v_mag, v_ang, f_local, rocof)| {
            Message::Meas(MeasMsg { seq, t, v_mag, v_ang, f_local, rocof })
        }),
        (any::<u64>(), finite(), finite(), any::<bool>(), mode()).prop_map(|(seq, i_p_ref, i_q_ref, breaker_open, mode)| {
            Message::Cmd(CmdMsg { seq, i_p_ref, i_q_ref, breaker_open, mode })
        }),
        Just(Message::Bye),
        any::<u64>().prop_map(|code| Message::Error { code }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn frames_roundtrip(msg in message()) {
        let bytes = encode_frame(&msg);
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        prop_assert_eq!(len + 4, bytes.len());
        prop_assert_eq!(bytes[4], msg.type_byte());
        prop_assert_eq!(decode_frame(&bytes).unwrap(), msg);
        prop_assert_eq!(read_frame(&mut bytes.as_slice()).unwrap(), msg);
    }

    #[test]
    fn decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
        let _ = decode_frame(&bytes);
        let _ = read_frame(&mut bytes.as_slice());
    }

    #[test]
    fn truncated_frames_are_errors(msg in message(), cut in 1usize..60) {
        let bytes = encode_frame(&msg);
        let cut = cut.min(bytes.len());
        prop_assert!(decode_frame(&bytes[..bytes.len() - cut]).is_err());
        prop_assert!(read_frame(&mut &bytes[..bytes.len() - cut]).is_err());
    }
}
