//! Payload layouts. All multi-byte integers are little-endian.

use serde::{Deserialize, Serialize};

use super::{EncodeError, ParseError};

pub const MAX_PAYLOAD: usize = 512;

pub mod msg_type {
    pub const ACCEL_BATCH: u8 = 0x01;
    pub const PPG_BATCH: u8 = 0x02;
    pub const AIR_QUALITY: u8 = 0x03;
    pub const DERIVED_METRICS: u8 = 0x04;
    pub const SESSION_EVENT: u8 = 0x05;
    pub const COMMAND: u8 = 0x10;
    pub const ACK: u8 = 0x11;
}

/// Accelerometer triple in milli-g.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccelTriple {
    pub x: i16,
    pub y: i16,
    pub z: i16,
}

/// One PPG sample pair in raw ADC counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpgPair {
    pub red: u16,
    pub ir: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    AccelBatch {
        t0_ms: u32,
        dt_us: u16,
        samples: Vec<AccelTriple>,
    },
    PpgBatch {
        t0_ms: u32,
        dt_us: u16,
        samples: Vec<PpgPair>,
    },
    AirQuality {
        t_ms: u32,
        pm25_tenths: u16,
        pm10_tenths: u16,
    },
    DerivedMetrics {
        t_ms: u32,
        spo2_tenths: u16,
        rr_tenths: u16,
        hr_tenths: u16,
        rep_count: u16,
        quality_flags: u8,
    },
    SessionEvent {
        t_ms: u32,
        event_code: u8,
        arg: u16,
    },
    Command {
        command_code: u8,
        arg: u16,
    },
    Ack {
        acked_seq: u16,
        status: u8,
    },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::AccelBatch { .. } => ACCEL_BATCH,
            Message::PpgBatch { .. } => PPG_BATCH,
            Message::AirQuality { .. } => AIR_QUALITY,
            Message::DerivedMetrics { .. } => DERIVED_METRICS,
            Message::SessionEvent { .. } => SESSION_EVENT,
            Message::Command { .. } => COMMAND,
            Message::Ack { .. } => ACK,
        }
    }

    /// Device timestamp carried by the message, if any.
    pub fn t_ms(&self) -> Option<u32> {
        match *self {
            Message::AccelBatch { t0_ms, .. } | Message::PpgBatch { t0_ms, .. } => Some(t0_ms),
            Message::AirQuality { t_ms, .. }
            | Message::DerivedMetrics { t_ms, .. }
            | Message::SessionEvent { t_ms, .. } => Some(t_ms),
            Message::Command { .. } | Message::Ack { .. } => None,
        }
    }

    /// Serialized payload length without allocating.
    pub fn payload_len(&self) -> usize {
        match self {
            Message::AccelBatch { samples, .. } => 7 + 6 * samples.len(),
            Message::PpgBatch { samples, .. } => 7 + 4 * samples.len(),
            Message::AirQuality { .. } => 8,
            Message::DerivedMetrics { .. } => 13,
            Message::SessionEvent { .. } => 7,
            Message::Command { .. } | Message::Ack { .. } => 3,
        }
    }
}

pub fn serialize_payload(m: &Message) -> Result<Vec<u8>, EncodeError> {
    let len = m.payload_len();
    if len > MAX_PAYLOAD {
        return Err(EncodeError::PayloadTooLarge(len));
    }
    let mut out = Vec::with_capacity(len);
    match m {
        Message::AccelBatch {
            t0_ms,
            dt_us,
            samples,
        } => {
            let n = u8::try_from(samples.len())
                .map_err(|_| EncodeError::TooManySamples(samples.len()))?;
            out.extend_from_slice(&t0_ms.to_le_bytes());
            out.extend_from_slice(&dt_us.to_le_bytes());
            out.push(n);
            for s in samples {
                out.extend_from_slice(&s.x.to_le_bytes());
                out.extend_from_slice(&s.y.to_le_bytes());
                out.extend_from_slice(&s.z.to_le_bytes());
            }
        }
        Message::PpgBatch {
            t0_ms,
            dt_us,
            samples,
        } => {
            let n = u8::try_from(samples.len())
                .map_err(|_| EncodeError::TooManySamples(samples.len()))?;
            out.extend_from_slice(&t0_ms.to_le_bytes());
            out.extend_from_slice(&dt_us.to_le_bytes());
            out.push(n);
            for s in samples {
                out.extend_from_slice(&s.red.to_le_bytes());
                out.extend_from_slice(&s.ir.to_le_bytes());
            }
        }
        Message::AirQuality {
            t_ms,
            pm25_tenths,
            pm10_tenths,
        } => {
            out.extend_from_slice(&t_ms.to_le_bytes());
            out.extend_from_slice(&pm25_tenths.to_le_bytes());
            out.extend_from_slice(&pm10_tenths.to_le_bytes());
        }
        Message::DerivedMetrics {
            t_ms,
            spo2_tenths,
            rr_tenths,
            hr_tenths,
            rep_count,
            quality_flags,
        } => {
            out.extend_from_slice(&t_ms.to_le_bytes());
            out.extend_from_slice(&spo2_tenths.to_le_bytes());
            out.extend_from_slice(&rr_tenths.to_le_bytes());
            out.extend_from_slice(&hr_tenths.to_le_bytes());
            out.extend_from_slice(&rep_count.to_le_bytes());
            out.push(*quality_flags);
        }
        Message::SessionEvent {
            t_ms,
            event_code,
            arg,
        } => {
            out.extend_from_slice(&t_ms.to_le_bytes());
            out.push(*event_code);
            out.extend_from_slice(&arg.to_le_bytes());
        }
        Message::Command { command_code, arg } => {
            out.push(*command_code);
            out.extend_from_slice(&arg.to_le_bytes());
        }
        Message::Ack { acked_seq, status } => {
            out.extend_from_slice(&acked_seq.to_le_bytes());
            out.push(*status);
        }
    }
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> u8 {
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }
    fn u16(&mut self) -> u16 {
        let v = u16::from_le_bytes([self.buf[self.pos], self.buf[self.pos + 1]]);
        self.pos += 2;
        v
    }
    fn i16(&mut self) -> i16 {
        self.u16() as i16
    }
    fn u32(&mut self) -> u32 {
        let b = &self.buf[self.pos..self.pos + 4];
        self.pos += 4;
        u32::from_le_bytes([b[0], b[1], b[2], b[3]])
    }
}

fn expect_len(msg_type: u8, bytes: &[u8], expected: usize) -> Result<(), ParseError> {
    if bytes.len() != expected {
        return Err(ParseError::LengthMismatch {
            msg_type,
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

pub fn parse_payload(msg_type: u8, bytes: &[u8]) -> Result<Message, ParseError> {
    use msg_type::*;
    let mut r = Reader { buf: bytes, pos: 0 };
    let m = match msg_type {
        ACCEL_BATCH | PPG_BATCH => {
            if bytes.len() < 7 {
                return Err(ParseError::LengthMismatch {
                    msg_type,
                    expected: 7,
                    actual: bytes.len(),
                });
            }
            let t0_ms = r.u32();
            let dt_us = r.u16();
            let n = r.u8() as usize;
            if msg_type == ACCEL_BATCH {
                expect_len(msg_type, bytes, 7 + 6 * n)?;
                let samples = (0..n)
                    .map(|_| AccelTriple {
                        x: r.i16(),
                        y: r.i16(),
                        z: r.i16(),
                    })
                    .collect();
                Message::AccelBatch {
                    t0_ms,
                    dt_us,
                    samples,
                }
            } else {
                expect_len(msg_type, bytes, 7 + 4 * n)?;
                let samples = (0..n)
                    .map(|_| PpgPair {
                        red: r.u16(),
                        ir: r.u16(),
                    })
                    .collect();
                Message::PpgBatch {
                    t0_ms,
                    dt_us,
                    samples,
                }
            }
        }
        AIR_QUALITY => {
            expect_len(msg_type, bytes, 8)?;
            Message::AirQuality {
                t_ms: r.u32(),
                pm25_tenths: r.u16(),
                pm10_tenths: r.u16(),
            }
        }
        DERIVED_METRICS => {
            expect_len(msg_type, bytes, 13)?;
            Message::DerivedMetrics {
                t_ms: r.u32(),
                spo2_tenths: r.u16(),
                rr_tenths: r.u16(),
                hr_tenths: r.u16(),
                rep_count: r.u16(),
                quality_flags: r.u8(),
            }
        }
        SESSION_EVENT => {
            expect_len(msg_type, bytes, 7)?;
            Message::SessionEvent {
                t_ms: r.u32(),
                event_code: r.u8(),
                arg: r.u16(),
            }
        }
        COMMAND => {
            expect_len(msg_type, bytes, 3)?;
            Message::Command {
                command_code: r.u8(),
                arg: r.u16(),
            }
        }
        ACK => {
            expect_len(msg_type, bytes, 3)?;
            Message::Ack {
                acked_seq: r.u16(),
                status: r.u8(),
            }
        }
        other => return Err(ParseError::UnknownType(other)),
    };
    Ok(m)
}
