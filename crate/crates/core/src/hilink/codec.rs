//! Length-prefixed binary frames.
//!
//! ```text
//! u32 LE length | u8 type | payload
//! ```
//! The length counts the type byte plus the payload. Payload fields are
//! little-endian 64-bit values in declaration order.

use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};
use crate::pvplant::InverterMode;

pub const TYPE_HELLO: u8 = 0x01;
pub const TYPE_HELLO_ACK: u8 = 0x02;
pub const TYPE_MEAS: u8 = 0x03;
pub const TYPE_CMD: u8 = 0x04;
pub const TYPE_BYE: u8 = 0x05;
pub const TYPE_ERROR: u8 = 0x06;

/// Largest length field accepted from a peer.
pub const MAX_FRAME_LEN: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hello {
    pub version: u64,
    pub dt: f64,
    pub step_count: u64,
    pub digest: [u8; 8],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasMsg {
    pub seq: u64,
    pub t: f64,
    pub v_mag: f64,
    pub v_ang: f64,
    pub f_local: f64,
    pub rocof: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmdMsg {
    pub seq: u64,
    pub i_p_ref: f64,
    pub i_q_ref: f64,
    pub breaker_open: bool,
    pub mode: InverterMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Message {
    Hello(Hello),
    HelloAck(Hello),
    Meas(MeasMsg),
    Cmd(CmdMsg),
    Bye,
    Error { code: u64 },
}

impl Message {
    pub fn type_byte(&self) -> u8 {
        match self {
            Message::Hello(_) => TYPE_HELLO,
            Message::HelloAck(_) => TYPE_HELLO_ACK,
            Message::Meas(_) => TYPE_MEAS,
            Message::Cmd(_) => TYPE_CMD,
            Message::Bye => TYPE_BYE,
            Message::Error { .. } => TYPE_ERROR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Hello(_) => "HELLO",
            Message::HelloAck(_) => "HELLO_ACK",
            Message::Meas(_) => "MEAS",
            Message::Cmd(_) => "CMD",
            Message::Bye => "BYE",
            Message::Error { .. } => "ERROR",
        }
    }
}

fn payload_len(type_byte: u8) -> Option<usize> {
    Some(match type_byte {
        TYPE_HELLO | TYPE_HELLO_ACK => 32,
        TYPE_MEAS => 48,
        TYPE_CMD => 40,
        TYPE_BYE => 0,
        TYPE_ERROR => 8,
        _ => return None,
    })
}

pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let mut payload = Vec::with_capacity(48);
    let hello = |p: &mut Vec<u8>, h: &Hello| {
        p.extend_from_slice(&h.version.to_le_bytes());
        p.extend_from_slice(&h.dt.to_le_bytes());
        p.extend_from_slice(&h.step_count.to_le_bytes());
        p.extend_from_slice(&h.digest);
    };
    match msg {
        Message::Hello(h) | Message::HelloAck(h) => hello(&mut payload, h),
        Message::Meas(m) => {
            payload.extend_from_slice(&m.seq.to_le_bytes());
            for x in [m.t, m.v_mag, m.v_ang, m.f_local, m.rocof] {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        Message::Cmd(c) => {
            payload.extend_from_slice(&c.seq.to_le_bytes());
            let breaker = if c.breaker_open { 1.0f64 } else { 0.0 };
            for x in [c.i_p_ref, c.i_q_ref, breaker, f64::from(c.mode.code())] {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        Message::Bye => {}
        Message::Error { code } => payload.extend_from_slice(&code.to_le_bytes()),
    }
    let mut frame = Vec::with_capacity(5 + payload.len());
    frame.extend_from_slice(&(payload.len() as u32 + 1).to_le_bytes());
    frame.push(msg.type_byte());
    frame.extend_from_slice(&payload);
    frame
}

struct Fields<'a> {
    bytes: &'a [u8],
}

impl Fields<'_> {
    fn take8(&mut self) -> [u8; 8] {
        let (head, rest) = self.bytes.split_at(8);
        self.bytes = rest;
        head.try_into().expect("8-byte field")
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take8())
    }

    fn f64(&mut self, name: &str) -> Result<f64> {
        let x = f64::from_le_bytes(self.take8());
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::Frame(format!("non-finite {name}")))
        }
    }
}

/// Decodes the body of a frame: the type byte followed by its payload.
pub fn decode_body(type_byte: u8, payload: &[u8]) -> Result<Message> {
    let expected =
        payload_len(type_byte).ok_or_else(|| Error::Frame(format!("unknown message type 0x{type_byte:02x}")))?;
    if payload.len() != expected {
        return Err(Error::Frame(format!(
            "type 0x{type_byte:02x} needs a {expected}-byte payload, got {}",
            payload.len()
        )));
    }
    let mut f = Fields { bytes: payload };
    let msg = match type_byte {
        TYPE_HELLO | TYPE_HELLO_ACK => {
            let h = Hello { version: f.u64(), dt: f.f64("dt")?, step_count: f.u64(), digest: f.take8() };
            if type_byte == TYPE_HELLO {
                Message::Hello(h)
            } else {
                Message::HelloAck(h)
            }
        }
        TYPE_MEAS => Message::Meas(MeasMsg {
            seq: f.u64(),
            t: f.f64("t")?,
            v_mag: f.f64("v_mag")?,
            v_ang: f.f64("v_ang")?,
            f_local: f.f64("f_local")?,
            rocof: f.f64("rocof")?,
        }),
        TYPE_CMD => {
            let seq = f.u64();
            let i_p_ref = f.f64("i_p_ref")?;
            let i_q_ref = f.f64("i_q_ref")?;
            let breaker_open = match f.f64("breaker_open")? {
                0.0 => false,
                1.0 => true,
                x => return Err(Error::Frame(format!("breaker_open must be 0 or 1, got {x}"))),
            };
            let code = f.f64("mode")?;
            let mode = (code.fract() == 0.0 && (0.0..=255.0).contains(&code))
                .then(|| InverterMode::from_code(code as u8))
                .flatten()
                .ok_or_else(|| Error::Frame(format!("invalid mode code {code}")))?;
            Message::Cmd(CmdMsg { seq, i_p_ref, i_q_ref, breaker_open, mode })
        }
        TYPE_BYE => Message::Bye,
        TYPE_ERROR => Message::Error { code: f.u64() },
        _ => unreachable!("type checked above"),
    };
    Ok(msg)
}

/// Decodes exactly one complete frame.
pub fn decode_frame(bytes: &[u8]) -> Result<Message> {
    if bytes.len() < 5 {
        return Err(Error::Frame(format!("frame of {} bytes is shorter than a header", bytes.len())));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"));
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(Error::Frame(format!("invalid length field {len}")));
    }
    if bytes.len() != 4 + len as usize {
        return Err(Error::Frame(format!(
            "length field says {len} bytes follow, frame carries {}",
            bytes.len() - 4
        )));
    }
    decode_body(bytes[4], &bytes[5..])
}

fn map_io(e: std::io::Error) -> Error {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Timeout,
        ErrorKind::UnexpectedEof => Error::Frame("connection closed mid-frame".into()),
        _ => Error::Io(e),
    }
}

/// Reads one frame from a byte stream.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Message> {
    let mut header = [0u8; 4];
    r.read_exact(&mut header).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Frame("connection closed".into()),
        _ => map_io(e),
    })?;
    let len = u32::from_le_bytes(header);
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(Error::Frame(format!("invalid length field {len}")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).map_err(map_io)?;
    decode_body(body[0], &body[1..])
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&encode_frame(msg)).map_err(map_io)?;
    w.flush().map_err(map_io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bye_layout() {
        assert_eq!(encode_frame(&Message::Bye), vec![0x01, 0x00, 0x00, 0x00, 0x05]);
        assert_eq!(decode_frame(&[1, 0, 0, 0, 5]).unwrap(), Message::Bye);
    }

    #[test]
    fn meas_layout() {
        let m = Message::Meas(MeasMsg { seq: 0, t: 0.0, v_mag: 1.0, v_ang: 0.0, f_local: 50.0, rocof: 0.0 });
        let bytes = encode_frame(&m);
        assert_eq!(bytes.len(), 53);
        assert_eq!(&bytes[..5], &[49, 0, 0, 0, TYPE_MEAS]);
        assert_eq!(&bytes[21..29], &1.0f64.to_le_bytes());
        assert_eq!(decode_frame(&bytes).unwrap(), m);
    }

    #[test]
    fn cmd_roundtrip() {
        let c = Message::Cmd(CmdMsg {
            seq: 77,
            i_p_ref: 0.1,
            i_q_ref: -0.02,
            breaker_open: true,
            mode: InverterMode::Recovery,
        });
        let bytes = encode_frame(&c);
        assert_eq!(bytes.len(), 45);
        assert_eq!(decode_frame(&bytes).unwrap(), c);
        assert_eq!(read_frame(&mut bytes.as_slice()).unwrap(), c);
    }

    #[test]
    fn malformed_frames() {
        let m = encode_frame(&Message::Meas(MeasMsg { seq: 1, t: 0.0, v_mag: 1.0, v_ang: 0.0, f_local: 50.0, rocof: 0.0 }));
        assert!(matches!(decode_frame(&m[..40]), Err(Error::Frame(_))));
        assert!(matches!(read_frame(&mut &m[..40]), Err(Error::Frame(_))));
        assert!(decode_frame(&[1, 0, 0, 0, 0x09]).is_err());
        assert!(decode_frame(&[2, 0, 0, 0, 0x05, 0]).is_err());
        let mut nan = m.clone();
        nan[13..21].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_frame(&nan).is_err());
        assert!(decode_frame(&[0xff, 0xff, 0xff, 0x7f, 1]).is_err());
    }

    #[test]
    fn cmd_field_domains() {
        let mut c = encode_frame(&Message::Cmd(CmdMsg {
            seq: 0,
            i_p_ref: 0.0,
            i_q_ref: 0.0,
            breaker_open: false,
            mode: InverterMode::Normal,
        }));
        c[29..37].copy_from_slice(&0.5f64.to_le_bytes());
        assert!(decode_frame(&c).is_err());
        c[29..37].copy_from_slice(&0.0f64.to_le_bytes());
        c[37..45].copy_from_slice(&7.0f64.to_le_bytes());
        assert!(decode_frame(&c).is_err());
        c[37..45].copy_from_slice(&1.5f64.to_le_bytes());
        assert!(decode_frame(&c).is_err());
    }
}
