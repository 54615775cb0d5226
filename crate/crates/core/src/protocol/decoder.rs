//! Streaming frame decoder with resynchronisation.

use serde::Serialize;

use super::crc::Crc16;
use super::frame::{CRC_LEN, HEADER_LEN, SOF, VERSION};
use super::message::{parse_payload, Message, MAX_PAYLOAD};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecoderStats {
    /// Bytes discarded while hunting for a frame start, including rejected SOF bytes.
    pub bytes_skipped: u64,
    /// Candidate frames rejected by the integrity checks: CRC mismatch or a
    /// length field above the payload cap.
    pub crc_failures: u64,
    /// Number of discontinuities in the sequence counter.
    pub seq_gaps: u64,
    /// Frames with a valid CRC whose type or payload could not be parsed.
    pub unknown_frames: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedFrame {
    pub seq: u16,
    pub message: Message,
    /// Frames missing between the previous frame and this one, modulo 2^16.
    pub missing_before: u16,
}

#[derive(Debug, Default, Clone)]
pub struct Decoder {
    buffer: Vec<u8>,
    stats: DecoderStats,
    last_seq: Option<u16>,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> DecoderStats {
        self.stats
    }

    pub fn last_seq(&self) -> Option<u16> {
        self.last_seq
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Feeds a chunk of the byte stream and returns every complete, valid
    /// frame it completes, in stream order.
    pub fn feed(&mut self, chunk: &[u8]) -> Vec<DecodedFrame> {
        if chunk.is_empty() {
            return Vec::new();
        }
        self.buffer.extend_from_slice(chunk);
        self.scan(false)
    }

    /// Ends the stream: a candidate still waiting for bytes is dropped as
    /// a false start and the bytes behind it are scanned again, so frames
    /// hidden behind a bogus length field are not lost.
    pub fn finish(&mut self) -> Vec<DecodedFrame> {
        self.scan(true)
    }

    fn scan(&mut self, eof: bool) -> Vec<DecodedFrame> {
        let mut out = Vec::new();
        let buf = &self.buffer;
        let len = buf.len();
        let mut pos = 0;
        loop {
            match buf[pos..].iter().position(|&b| b == SOF) {
                Some(i) => {
                    self.stats.bytes_skipped += i as u64;
                    pos += i;
                }
                None => {
                    self.stats.bytes_skipped += (len - pos) as u64;
                    pos = len;
                    break;
                }
            }
            if len - pos < HEADER_LEN {
                if eof {
                    self.stats.bytes_skipped += 1;
                    pos += 1;
                    continue;
                }
                break;
            }
            let payload_len = u16::from_le_bytes([buf[pos + 5], buf[pos + 6]]) as usize;
            if payload_len > MAX_PAYLOAD {
                self.stats.crc_failures += 1;
                self.stats.bytes_skipped += 1;
                pos += 1;
                continue;
            }
            let total = HEADER_LEN + payload_len + CRC_LEN;
            if len - pos < total {
                if eof {
                    self.stats.bytes_skipped += 1;
                    pos += 1;
                    continue;
                }
                break;
            }
            let body_end = pos + HEADER_LEN + payload_len;
            let mut crc = Crc16::new();
            crc.update(&buf[pos + 1..body_end]);
            let wire_crc = u16::from_le_bytes([buf[body_end], buf[body_end + 1]]);
            if crc.finish() != wire_crc {
                self.stats.crc_failures += 1;
                self.stats.bytes_skipped += 1;
                pos += 1;
                continue;
            }

            let version = buf[pos + 1];
            let msg_type = buf[pos + 2];
            let seq = u16::from_le_bytes([buf[pos + 3], buf[pos + 4]]);
            let payload = &buf[pos + HEADER_LEN..body_end];
            pos += total;

            let missing_before = match self.last_seq {
                Some(last) => seq.wrapping_sub(last).wrapping_sub(1),
                None => 0,
            };
            if missing_before != 0 {
                self.stats.seq_gaps += 1;
            }
            self.last_seq = Some(seq);

            if version != VERSION {
                self.stats.unknown_frames += 1;
                continue;
            }
            match parse_payload(msg_type, payload) {
                Ok(message) => out.push(DecodedFrame {
                    seq,
                    message,
                    missing_before,
                }),
                Err(_) => self.stats.unknown_frames += 1,
            }
        }
        self.buffer.drain(..pos);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::encode_frame;

    fn ack(seq: u16) -> Vec<u8> {
        encode_frame(
            &Message::Ack {
                acked_seq: seq,
                status: 0,
            },
            seq,
        )
        .unwrap()
    }

    #[test]
    fn finish_recovers_frames_behind_a_false_start() {
        // a bogus SOF whose length field covers the real frame
        let mut stream = vec![SOF, VERSION, 0x11, 0, 0, 0x40, 0x00];
        stream.extend(ack(3));
        let mut d = Decoder::new();
        assert!(d.feed(&stream).is_empty());
        let frames = d.finish();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].seq, 3);
        assert_eq!(d.buffered(), 0);
        assert_eq!(d.stats().bytes_skipped, 7);
    }

    #[test]
    fn empty_chunk_leaves_state_unchanged() {
        let mut d = Decoder::new();
        assert!(d.feed(&[]).is_empty());
        assert_eq!(d.stats(), DecoderStats::default());
        assert_eq!(d.buffered(), 0);
    }

    #[test]
    fn gap_is_reported_once_with_its_size() {
        let mut d = Decoder::new();
        let mut bytes = ack(5);
        bytes.extend(ack(8));
        let frames = d.feed(&bytes);
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].missing_before, 0);
        assert_eq!(frames[1].missing_before, 2);
        assert_eq!(d.stats().seq_gaps, 1);
    }

    #[test]
    fn seq_wraps_without_gap() {
        let mut d = Decoder::new();
        let mut bytes = ack(u16::MAX);
        bytes.extend(ack(0));
        let frames = d.feed(&bytes);
        assert_eq!(frames[1].missing_before, 0);
        assert_eq!(d.stats().seq_gaps, 0);
    }

    #[test]
    fn oversize_length_field_is_rejected_and_skipped() {
        let mut d = Decoder::new();
        let mut bytes = vec![SOF, VERSION, 0x11, 0, 0, 0xFF, 0xFF];
        bytes.extend(ack(1));
        let frames = d.feed(&bytes);
        assert_eq!(frames.len(), 1);
        assert_eq!(d.stats().crc_failures, 1);
    }
}
