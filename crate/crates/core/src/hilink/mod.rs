//! Plant/controller co-simulation over a blocking lockstep wire protocol.
//!
//! The plant sends `HELLO`, the controller answers `HELLO_ACK` (or
//! `ERROR`). Then for every step the plant sends one `MEAS` built from the
//! state after the previous step and waits for the matching `CMD` before
//! advancing. `BYE` ends the session.

mod codec;
mod transport;

pub use codec::{
    decode_body, decode_frame, encode_frame, read_frame, write_frame, CmdMsg, Hello, MeasMsg, Message,
    MAX_FRAME_LEN, TYPE_BYE, TYPE_CMD, TYPE_ERROR, TYPE_HELLO, TYPE_HELLO_ACK, TYPE_MEAS,
};
pub use transport::{connect, pipe_pair, Endpoint, Listener, PipeEnd, Stream};

use std::io::{Read, Write};
use std::time::Duration;

use crate::dynamics::{Command, Controller, Measurement, World};
use crate::error::{Error, Result};
use crate::pvplant::CurrentRef;
use crate::scenario::{RunResult, ScenarioSpec};

pub const PROTOCOL_VERSION: u64 = 1;

/// Per-step wait before a silent peer is declared dead.
pub const STEP_TIMEOUT: Duration = Duration::from_secs(10);

/// Codes carried by `ERROR` frames.
pub mod error_code {
    pub const VERSION: u64 = 1;
    pub const DT: u64 = 2;
    pub const STEP_COUNT: u64 = 3;
    pub const DIGEST: u64 = 4;
    pub const SEQUENCE: u64 = 5;
    pub const UNEXPECTED: u64 = 6;
    pub const MALFORMED: u64 = 7;
    pub const INTERNAL: u64 = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Plant,
    Controller,
}

/// Session parameters both peers must agree on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub role: Role,
    pub version: u64,
    pub dt: f64,
    pub step_count: u64,
    pub digest: [u8; 8],
}

impl LinkConfig {
    pub fn hello(&self) -> Hello {
        Hello { version: self.version, dt: self.dt, step_count: self.step_count, digest: self.digest }
    }

    /// Error code for a peer HELLO that does not match this side.
    fn mismatch(&self, h: &Hello) -> Option<(u64, String)> {
        if h.version != self.version {
            return Some((error_code::VERSION, format!("protocol version {} (expected {})", h.version, self.version)));
        }
        if h.dt.to_bits() != self.dt.to_bits() {
            return Some((error_code::DT, format!("dt {} (expected {})", h.dt, self.dt)));
        }
        if h.step_count != self.step_count {
            return Some((
                error_code::STEP_COUNT,
                format!("step count {} (expected {})", h.step_count, self.step_count),
            ));
        }
        if h.digest != self.digest {
            return Some((error_code::DIGEST, "scenario digest mismatch".into()));
        }
        None
    }
}

fn error_code_for(e: &Error) -> u64 {
    match e {
        Error::Frame(_) => error_code::MALFORMED,
        Error::Protocol(_) => error_code::SEQUENCE,
        _ => error_code::INTERNAL,
    }
}

/// Plant-side stand-in for the controller: forwards each measurement over
/// the wire and blocks for the command.
pub struct RemoteController<S: Read + Write> {
    stream: S,
}

impl<S: Read + Write> RemoteController<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }

    pub fn stream_mut(&mut self) -> &mut S {
        &mut self.stream
    }
}

impl<S: Read + Write> Controller for RemoteController<S> {
    fn control(&mut self, m: &Measurement) -> Result<Command> {
        let meas = MeasMsg { seq: m.seq, t: m.t, v_mag: m.v_mag, v_ang: m.v_ang, f_local: m.f_local, rocof: m.rocof };
        write_frame(&mut self.stream, &Message::Meas(meas))?;
        match read_frame(&mut self.stream)? {
            Message::Cmd(c) if c.seq == m.seq => Ok(Command {
                seq: c.seq,
                current: CurrentRef { i_p: c.i_p_ref, i_q: c.i_q_ref },
                breaker_open: c.breaker_open,
                mode: c.mode,
            }),
            Message::Cmd(c) => Err(Error::Protocol(format!("CMD seq {} answers MEAS seq {}", c.seq, m.seq))),
            Message::Error { code } => Err(Error::Peer(code)),
            other => Err(Error::Protocol(format!("expected CMD, got {}", other.name()))),
        }
    }
}

/// Plant side of a session: handshake, one lockstep exchange per step,
/// then `BYE`. On failure the peer is told why (best effort) and the steps
/// completed so far come back inside [`Error::SessionAborted`].
pub fn plant_serve<S: Read + Write>(
    mut world: World,
    stream: S,
    link: &LinkConfig,
    spec: &ScenarioSpec,
) -> Result<RunResult> {
    let mut remote = RemoteController::new(stream);
    let mut records = Vec::with_capacity(link.step_count as usize);
    let outcome = (|| -> Result<()> {
        write_frame(remote.stream_mut(), &Message::Hello(link.hello()))?;
        match read_frame(remote.stream_mut())? {
            Message::HelloAck(h) if h == link.hello() => {}
            Message::HelloAck(_) => return Err(Error::Protocol("HELLO_ACK does not echo HELLO".into())),
            Message::Error { code } => return Err(Error::Peer(code)),
            other => return Err(Error::Protocol(format!("expected HELLO_ACK, got {}", other.name()))),
        }
        for _ in 0..link.step_count {
            records.push(world.step(&mut remote)?);
        }
        write_frame(remote.stream_mut(), &Message::Bye)
    })();
    match outcome {
        Ok(()) => Ok(RunResult::from_world(&world, spec, records, link.step_count as usize, true)),
        Err(e) => {
            if !matches!(e, Error::Peer(_)) {
                let _ = write_frame(remote.stream_mut(), &Message::Error { code: error_code_for(&e) });
            }
            let partial = RunResult::from_world(&world, spec, records, link.step_count as usize, false);
            Err(Error::SessionAborted { reason: e.to_string(), partial: Box::new(partial) })
        }
    }
}

/// Tells the peer why the session ends (best effort) and hands back `e`.
fn abort<S: Write>(stream: &mut S, code: u64, e: Error) -> Error {
    let _ = write_frame(stream, &Message::Error { code });
    e
}

/// Reads a frame, answering malformed input with `ERROR` before failing.
fn read_or_abort<S: Read + Write>(stream: &mut S) -> Result<Message> {
    read_frame(stream).map_err(|e| match e {
        Error::Frame(_) => abort(stream, error_code::MALFORMED, e),
        other => other,
    })
}

/// Controller side of a session. Returns once the plant says `BYE`.
pub fn controller_run<S: Read + Write>(mut stream: S, link: &LinkConfig, controller: &mut dyn Controller) -> Result<()> {
    match read_or_abort(&mut stream)? {
        Message::Hello(h) => {
            if let Some((code, why)) = link.mismatch(&h) {
                return Err(abort(&mut stream, code, Error::Protocol(format!("handshake rejected: {why}"))));
            }
            write_frame(&mut stream, &Message::HelloAck(h))?;
        }
        Message::Error { code } => return Err(Error::Peer(code)),
        other => {
            let e = Error::Protocol(format!("expected HELLO, got {}", other.name()));
            return Err(abort(&mut stream, error_code::UNEXPECTED, e));
        }
    }
    let mut expected = 0u64;
    loop {
        match read_or_abort(&mut stream)? {
            Message::Meas(m) => {
                if m.seq != expected || m.seq >= link.step_count {
                    let e = Error::Protocol(format!("MEAS seq {} (expected {expected})", m.seq));
                    return Err(abort(&mut stream, error_code::SEQUENCE, e));
                }
                let meas = Measurement {
                    seq: m.seq,
                    t: m.t,
                    v_mag: m.v_mag,
                    v_ang: m.v_ang,
                    f_local: m.f_local,
                    rocof: m.rocof,
                };
                let cmd = controller
                    .control(&meas)
                    .map_err(|e| abort(&mut stream, error_code::INTERNAL, e))?;
                let reply = CmdMsg {
                    seq: m.seq,
                    i_p_ref: cmd.current.i_p,
                    i_q_ref: cmd.current.i_q,
                    breaker_open: cmd.breaker_open,
                    mode: cmd.mode,
                };
                write_frame(&mut stream, &Message::Cmd(reply))?;
                expected += 1;
            }
            Message::Bye => return Ok(()),
            Message::Error { code } => return Err(Error::Peer(code)),
            other => {
                let e = Error::Protocol(format!("unexpected {} during session", other.name()));
                return Err(abort(&mut stream, error_code::UNEXPECTED, e));
            }
        }
    }
}
