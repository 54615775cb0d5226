//! Frame layout:
//!
//! ```text
//! +------+---------+----------+---------+-------------+---------+---------+
//! | 0xA5 | version | msg_type | seq LE  | payload_len | payload | crc LE  |
//! |  1   |    1    |    1     |    2    |    2 LE     | 0..512  |    2    |
//! +------+---------+----------+---------+-------------+---------+---------+
//! ```
//!
//! The CRC covers `version..=payload`; the SOF byte is excluded.

use super::crc::Crc16;
use super::message::{serialize_payload, Message, MAX_PAYLOAD};
use super::EncodeError;

pub const SOF: u8 = 0xA5;
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 7;
pub const CRC_LEN: usize = 2;
pub const MAX_FRAME: usize = HEADER_LEN + MAX_PAYLOAD + CRC_LEN;

pub fn encode_frame(m: &Message, seq: u16) -> Result<Vec<u8>, EncodeError> {
    let payload = serialize_payload(m)?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.push(SOF);
    out.push(VERSION);
    out.push(m.msg_type());
    out.extend_from_slice(&seq.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&payload);
    let mut crc = Crc16::new();
    crc.update(&out[1..]);
    out.extend_from_slice(&crc.finish().to_le_bytes());
    Ok(out)
}

/// Appends encoded frames with consecutive sequence numbers.
#[derive(Debug, Default, Clone)]
pub struct FrameWriter {
    next_seq: u16,
}

impl FrameWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(seq: u16) -> Self {
        Self { next_seq: seq }
    }

    pub fn next_seq(&self) -> u16 {
        self.next_seq
    }

    /// Encodes `m` with the next sequence number, returning the bytes and the
    /// seq used. The counter only advances on success.
    pub fn encode(&mut self, m: &Message) -> Result<(Vec<u8>, u16), EncodeError> {
        let seq = self.next_seq;
        let bytes = encode_frame(m, seq)?;
        self.next_seq = seq.wrapping_add(1);
        Ok((bytes, seq))
    }
}
