//! Telemetry link: message schema, framing and transports.

mod crc;
mod frame;
mod message;
pub mod transport;

pub use crc::crc16_ccitt;
pub use frame::{
    decode, decode_payload, encode, frame_payload, DecodeError, DecodeErrorKind, DecodeOutcome, EncodeError,
    FrameCodec, FrameDecoder, DEFAULT_MAX_PAYLOAD, HEADER_LEN, MAGIC, TRAILER_LEN,
};
pub use message::{quantize, AlarmKind, MessageBody, OccupancyReason, SchemaError, Severity, TelemetryMessage};
