//! Framed binary telemetry link between the device and the host.

mod codes;
mod crc;
mod decoder;
mod frame;
mod message;
mod token;

pub use codes::{quality, AckStatus, CommandCode, EventCode, WarningCode};
pub use crc::{crc16, Crc16};
pub use decoder::{DecodedFrame, Decoder, DecoderStats};
pub use frame::{encode_frame, FrameWriter, CRC_LEN, HEADER_LEN, MAX_FRAME, SOF, VERSION};
pub use token::{BindingToken, TOKEN_LEN};
pub use message::{
    msg_type, parse_payload, serialize_payload, AccelTriple, Message, PpgPair, MAX_PAYLOAD,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte cap")]
    PayloadTooLarge(usize),
    #[error("{0} samples do not fit the one-byte count field")]
    TooManySamples(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload for type 0x{msg_type:02x} is {actual} bytes, expected {expected}")]
    LengthMismatch {
        msg_type: u8,
        expected: usize,
        actual: usize,
    },
}
