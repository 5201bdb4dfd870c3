//! Datagram frame codec.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MASC"
//!      4     1  version (1)
//!      5     1  msg_type: 0x01 State, 0x02 Command, 0x03 Weather, 0x04 Heartbeat
//!      6     4  seq, u32 LE
//!     10     2  payload_len, u16 LE
//!     12     n  payload
//!   12+n     4  CRC-32 (IEEE) of bytes [0, 12+n), LE
//! ```
//!
//! Payload fields are little-endian binary64 unless noted.

use thiserror::Error;

use crate::dynamics::AircraftState;
use crate::guidance::GuidancePhase;
use crate::weather::WeatherConfig;

pub const MAGIC: [u8; 4] = *b"MASC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
pub const CRC_LEN: usize = 4;
pub const MAX_FRAME_LEN: usize = 512;

pub const STATE_PAYLOAD_LEN: usize = 13 * 8;
pub const COMMAND_PAYLOAD_LEN: usize = 4 * 8;
/// Five binary64 fields and the seed as u64.
pub const WEATHER_PAYLOAD_LEN: usize = 6 * 8;
pub const HEARTBEAT_PAYLOAD_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    State = 0x01,
    Command = 0x02,
    Weather = 0x03,
    Heartbeat = 0x04,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => MsgType::State,
            0x02 => MsgType::Command,
            0x03 => MsgType::Weather,
            0x04 => MsgType::Heartbeat,
            _ => return None,
        })
    }

    pub fn payload_len(self) -> usize {
        match self {
            MsgType::State => STATE_PAYLOAD_LEN,
            MsgType::Command => COMMAND_PAYLOAD_LEN,
            MsgType::Weather => WEATHER_PAYLOAD_LEN,
            MsgType::Heartbeat => HEARTBEAT_PAYLOAD_LEN,
        }
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }
}

/// Autopilot output as carried on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandPayload {
    /// Time stamp of the state this command answers.
    pub t: f64,
    pub roll_cmd: f64,
    pub pitch_cmd: f64,
    pub phase: GuidancePhase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Message {
    State(AircraftState),
    Command(CommandPayload),
    Weather(WeatherConfig),
    Heartbeat { t: f64 },
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::State(_) => MsgType::State,
            Message::Command(_) => MsgType::Command,
            Message::Weather(_) => MsgType::Weather,
            Message::Heartbeat { .. } => MsgType::Heartbeat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub seq: u32,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("bad length: expected {expected}, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("crc mismatch: frame says {stated:#010x}, computed {computed:#010x}")]
    BadCrc { stated: u32, computed: u32 },
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("field {index} is not finite")]
    NonFiniteField { index: usize },
    #[error("phase code {0} is not 0, 1, 2 or 3")]
    BadPhaseCode(u64),
}

fn state_fields(s: &AircraftState) -> [f64; 13] {
    [
        s.t, s.north, s.east, s.alt, s.airspeed, s.psi, s.gamma, s.phi, s.theta, s.p, s.q, s.r,
        s.rpm,
    ]
}

fn weather_fields(w: &WeatherConfig) -> [f64; 5] {
    [
        w.wind_dir_deg,
        w.wind_speed_kts,
        w.turbulence_pct,
        w.gust_increase_kts,
        w.wind_shear,
    ]
}

fn check_finite(fields: &[f64]) -> Result<(), FrameError> {
    match fields.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(FrameError::NonFiniteField { index }),
        None => Ok(()),
    }
}

fn put_all(out: &mut Vec<u8>, fields: &[f64]) {
    for v in fields {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a frame. Non-finite payload fields are rejected.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    let kind = frame.message.msg_type();
    let mut payload = Vec::with_capacity(kind.payload_len());
    match &frame.message {
        Message::State(s) => {
            let f = state_fields(s);
            check_finite(&f)?;
            put_all(&mut payload, &f);
        }
        Message::Command(c) => {
            let f = [c.t, c.roll_cmd, c.pitch_cmd, f64::from(c.phase.code())];
            check_finite(&f)?;
            put_all(&mut payload, &f);
        }
        Message::Weather(w) => {
            let f = weather_fields(w);
            check_finite(&f)?;
            put_all(&mut payload, &f);
            payload.extend_from_slice(&w.seed.to_le_bytes());
        }
        Message::Heartbeat { t } => {
            check_finite(&[*t])?;
            put_all(&mut payload, &[*t]);
        }
    }
    debug_assert_eq!(payload.len(), kind.payload_len());

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&frame.seq.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn f64_at(bytes: &[u8], i: usize) -> f64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&bytes[i * 8..i * 8 + 8]);
    f64::from_le_bytes(b)
}

fn read_fields<const N: usize>(payload: &[u8]) -> Result<[f64; N], FrameError> {
    let f: [f64; N] = std::array::from_fn(|i| f64_at(payload, i));
    check_finite(&f)?;
    Ok(f)
}

/// Parses a datagram. Total over arbitrary input.
///
/// Checks run in this order: overall length against the header's
/// payload_len, CRC, magic, version, message type, per-type payload length,
/// field values.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    let min = HEADER_LEN + CRC_LEN;
    if bytes.len() < min || bytes.len() > MAX_FRAME_LEN {
        return Err(FrameError::BadLength {
            expected: min,
            actual: bytes.len(),
        });
    }
    let payload_len = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    let expected = HEADER_LEN + payload_len + CRC_LEN;
    if bytes.len() != expected {
        return Err(FrameError::BadLength {
            expected,
            actual: bytes.len(),
        });
    }
    let body = &bytes[..HEADER_LEN + payload_len];
    let tail = &bytes[HEADER_LEN + payload_len..];
    let stated = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
    let computed = crc32fast::hash(body);
    if stated != computed {
        return Err(FrameError::BadCrc { stated, computed });
    }
    if bytes[..4] != MAGIC {
        return Err(FrameError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(FrameError::BadVersion(bytes[4]));
    }
    let kind = MsgType::from_byte(bytes[5]).ok_or(FrameError::UnknownType(bytes[5]))?;
    if payload_len != kind.payload_len() {
        return Err(FrameError::BadLength {
            expected: HEADER_LEN + kind.payload_len() + CRC_LEN,
            actual: bytes.len(),
        });
    }
    let seq = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]);
    let payload = &body[HEADER_LEN..];
    let message = match kind {
        MsgType::State => {
            let f: [f64; 13] = read_fields(payload)?;
            Message::State(AircraftState {
                t: f[0],
                north: f[1],
                east: f[2],
                alt: f[3],
                airspeed: f[4],
                psi: f[5],
                gamma: f[6],
                phi: f[7],
                theta: f[8],
                p: f[9],
                q: f[10],
                r: f[11],
                rpm: f[12],
            })
        }
        MsgType::Command => {
            let f: [f64; 4] = read_fields(payload)?;
            let code = f[3];
            // Only the exact encodings 0.0..=3.0 are accepted, so -0.0 is not.
            let phase = (0u8..4)
                .find(|&c| f64::from(c).to_bits() == code.to_bits())
                .and_then(GuidancePhase::from_code)
                .ok_or(FrameError::BadPhaseCode(code.to_bits()))?;
            Message::Command(CommandPayload {
                t: f[0],
                roll_cmd: f[1],
                pitch_cmd: f[2],
                phase,
            })
        }
        MsgType::Weather => {
            let f: [f64; 5] = read_fields(payload)?;
            let mut seed = [0u8; 8];
            seed.copy_from_slice(&payload[40..48]);
            Message::Weather(WeatherConfig {
                wind_dir_deg: f[0],
                wind_speed_kts: f[1],
                turbulence_pct: f[2],
                gust_increase_kts: f[3],
                wind_shear: f[4],
                seed: u64::from_le_bytes(seed),
            })
        }
        MsgType::Heartbeat => {
            let f: [f64; 1] = read_fields(payload)?;
            Message::Heartbeat { t: f[0] }
        }
    };
    Ok(Frame { seq, message })
}

/// Per-type outgoing sequence counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeqCounter {
    next: [u32; 4],
}

impl SeqCounter {
    /// Builds the next frame of this message's type.
    pub fn frame(&mut self, message: Message) -> Frame {
        let i = message.msg_type().index();
        let seq = self.next[i];
        self.next[i] = seq.wrapping_add(1);
        Frame { seq, message }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heartbeat_layout() {
        let bytes = encode_frame(&Frame {
            seq: 0,
            message: Message::Heartbeat { t: 0.0 },
        })
        .unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(
            &bytes[..12],
            &[0x4D, 0x41, 0x53, 0x43, 0x01, 0x04, 0x00, 0x00, 0x00, 0x00, 0x08, 0x00]
        );
    }

    #[test]
    fn state_north_field_position() {
        let mut s = AircraftState::level(21822.0, -9751.8, 3000.0, 0.4, 35.0, 0.0);
        s.t = 12.5;
        let bytes = encode_frame(&Frame {
            seq: 7,
            message: Message::State(s),
        })
        .unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 104 + CRC_LEN);
        let payload = &bytes[HEADER_LEN..];
        // 21822 = 1.33190918 * 2^14: exponent 1023 + 14, mantissa bits 0x54F80...
        assert_eq!(&payload[8..16], &0x40D5_4F80_0000_0000u64.to_le_bytes());
        assert_eq!(f64::from_bits(0x40D5_4F80_0000_0000), 21822.0);
    }

    #[test]
    fn round_trip_each_type() {
        let msgs = [
            Message::State(AircraftState::level(1.0, 2.0, 3.0, 0.1, 35.0, 2400.0)),
            Message::Command(CommandPayload {
                t: 3.25,
                roll_cmd: -0.2,
                pitch_cmd: 0.05,
                phase: GuidancePhase::Loiter,
            }),
            Message::Weather(WeatherConfig {
                wind_dir_deg: 20.0,
                wind_speed_kts: 14.0,
                turbulence_pct: 10.0,
                gust_increase_kts: 10.0,
                wind_shear: 10.0,
                seed: u64::MAX - 3,
            }),
            Message::Heartbeat { t: 9.0 },
        ];
        for (i, m) in msgs.into_iter().enumerate() {
            let f = Frame {
                seq: 1000 + i as u32,
                message: m,
            };
            assert_eq!(decode_frame(&encode_frame(&f).unwrap()), Ok(f));
        }
    }

    #[test]
    fn non_finite_rejected_on_encode() {
        let f = Frame {
            seq: 0,
            message: Message::Heartbeat { t: f64::NAN },
        };
        assert_eq!(
            encode_frame(&f),
            Err(FrameError::NonFiniteField { index: 0 })
        );
    }

    fn reseal(mut bytes: Vec<u8>) -> Vec<u8> {
        let n = bytes.len() - CRC_LEN;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        bytes
    }

    fn heartbeat() -> Vec<u8> {
        encode_frame(&Frame {
            seq: 3,
            message: Message::Heartbeat { t: 1.0 },
        })
        .unwrap()
    }

    #[test]
    fn truncated_frame_is_bad_length() {
        let b = heartbeat();
        assert!(matches!(
            decode_frame(&b[..b.len() - 1]),
            Err(FrameError::BadLength { .. })
        ));
        assert!(matches!(decode_frame(&[]), Err(FrameError::BadLength { .. })));
    }

    #[test]
    fn header_errors_are_distinguished() {
        let mut b = heartbeat();
        b[0] = b'X';
        assert_eq!(decode_frame(&reseal(b)), Err(FrameError::BadMagic));

        let mut b = heartbeat();
        b[4] = 2;
        assert_eq!(decode_frame(&reseal(b)), Err(FrameError::BadVersion(2)));

        let mut b = heartbeat();
        b[5] = 0x7F;
        assert_eq!(decode_frame(&reseal(b)), Err(FrameError::UnknownType(0x7F)));

        let mut b = heartbeat();
        b[5] = MsgType::Command as u8;
        assert!(matches!(
            decode_frame(&reseal(b)),
            Err(FrameError::BadLength { .. })
        ));

        let mut b = heartbeat();
        b[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert_eq!(
            decode_frame(&reseal(b)),
            Err(FrameError::NonFiniteField { index: 0 })
        );
    }

    #[test]
    fn bad_phase_code_rejected() {
        let mut b = encode_frame(&Frame {
            seq: 0,
            message: Message::Command(CommandPayload {
                t: 0.0,
                roll_cmd: 0.0,
                pitch_cmd: 0.0,
                phase: GuidancePhase::Cruise,
            }),
        })
        .unwrap();
        b[HEADER_LEN + 24..HEADER_LEN + 32].copy_from_slice(&1.5f64.to_le_bytes());
        assert!(matches!(
            decode_frame(&reseal(b)),
            Err(FrameError::BadPhaseCode(_))
        ));
    }

    #[test]
    fn seq_counts_per_type() {
        let mut c = SeqCounter::default();
        assert_eq!(c.frame(Message::Heartbeat { t: 0.0 }).seq, 0);
        assert_eq!(c.frame(Message::Heartbeat { t: 0.0 }).seq, 1);
        let s = AircraftState::level(0.0, 0.0, 0.0, 0.0, 35.0, 0.0);
        assert_eq!(c.frame(Message::State(s)).seq, 0);
        assert_eq!(c.frame(Message::Heartbeat { t: 0.0 }).seq, 2);
    }
}
