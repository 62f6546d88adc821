//! Binary framing.
//!
//! ```text
//! +------+------+-----------+-----------------+-----------+
//! | 0xA5 | 0x5A | len u16le | payload (JSON)  | crc u16be |
//! +------+------+-----------+-----------------+-----------+
//! ```
//!
//! The CRC covers the payload only. The decoder scans for the magic, skips
//! anything that fails validation and resumes scanning one byte later.

use serde::Serialize;
use thiserror::Error;

use super::crc::crc16_ccitt;
use super::message::TelemetryMessage;

pub const MAGIC: [u8; 2] = [0xA5, 0x5A];
pub const HEADER_LEN: usize = 4;
pub const TRAILER_LEN: usize = 2;
pub const DEFAULT_MAX_PAYLOAD: usize = 240;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("payload of {size} bytes exceeds the {budget}-byte budget by {overflow}")]
    OverBudget { size: usize, budget: usize, overflow: usize },
    #[error(transparent)]
    Schema(#[from] super::message::SchemaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeErrorKind {
    BadMagic,
    BadLength,
    CrcMismatch,
    MalformedJson,
    SchemaViolation,
}

impl DecodeErrorKind {
    /// Whether the error accounts for a frame (as opposed to line noise).
    pub fn is_frame_error(self) -> bool {
        !matches!(self, DecodeErrorKind::BadMagic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeError {
    pub kind: DecodeErrorKind,
    /// Offset in the decoded buffer.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeOutcome {
    pub messages: Vec<TelemetryMessage>,
    pub consumed: usize,
    pub errors: Vec<DecodeError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameCodec {
    pub max_payload: usize,
}

impl Default for FrameCodec {
    fn default() -> Self {
        FrameCodec { max_payload: DEFAULT_MAX_PAYLOAD }
    }
}

impl FrameCodec {
    pub fn max_frame(&self) -> usize {
        HEADER_LEN + self.max_payload + TRAILER_LEN
    }

    pub fn encode_payload(&self, msg: &TelemetryMessage) -> Result<Vec<u8>, EncodeError> {
        msg.validate()?;
        let payload = serde_json::to_vec(msg).expect("message serializes");
        if payload.len() > self.max_payload {
            return Err(EncodeError::OverBudget {
                size: payload.len(),
                budget: self.max_payload,
                overflow: payload.len() - self.max_payload,
            });
        }
        Ok(payload)
    }

    pub fn encode(&self, msg: &TelemetryMessage) -> Result<Vec<u8>, EncodeError> {
        let payload = self.encode_payload(msg)?;
        Ok(frame_payload(&payload))
    }

    pub fn decode(&self, stream: &[u8]) -> DecodeOutcome {
        let mut out = DecodeOutcome::default();
        let mut pos = 0;
        let mut noise_start: Option<usize> = None;
        let flush_noise = |noise: &mut Option<usize>, errors: &mut Vec<DecodeError>| {
            if let Some(offset) = noise.take() {
                errors.push(DecodeError { kind: DecodeErrorKind::BadMagic, offset });
            }
        };
        while pos < stream.len() {
            let rest = &stream[pos..];
            if rest.len() == 1 && rest[0] == MAGIC[0] {
                break;
            }
            if rest.len() < 2 || rest[..2] != MAGIC {
                noise_start.get_or_insert(pos);
                pos += 1;
                continue;
            }
            flush_noise(&mut noise_start, &mut out.errors);
            if rest.len() < HEADER_LEN {
                break;
            }
            let len = u16::from_le_bytes([rest[2], rest[3]]) as usize;
            if len > self.max_payload {
                out.errors.push(DecodeError { kind: DecodeErrorKind::BadLength, offset: pos });
                pos += 1;
                continue;
            }
            let total = HEADER_LEN + len + TRAILER_LEN;
            if rest.len() < total {
                break;
            }
            let payload = &rest[HEADER_LEN..HEADER_LEN + len];
            let crc = u16::from_be_bytes([rest[HEADER_LEN + len], rest[HEADER_LEN + len + 1]]);
            if crc16_ccitt(payload) != crc {
                out.errors.push(DecodeError { kind: DecodeErrorKind::CrcMismatch, offset: pos });
                pos += 1;
                continue;
            }
            match decode_payload(payload) {
                Ok(m) => out.messages.push(m),
                Err(kind) => out.errors.push(DecodeError { kind, offset: pos }),
            }
            pos += total;
        }
        flush_noise(&mut noise_start, &mut out.errors);
        out.consumed = pos;
        out
    }
}

pub fn frame_payload(payload: &[u8]) -> Vec<u8> {
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len() + TRAILER_LEN);
    frame.extend_from_slice(&MAGIC);
    frame.extend_from_slice(&(payload.len() as u16).to_le_bytes());
    frame.extend_from_slice(payload);
    frame.extend_from_slice(&crc16_ccitt(payload).to_be_bytes());
    frame
}

pub fn decode_payload(payload: &[u8]) -> Result<TelemetryMessage, DecodeErrorKind> {
    let value: serde_json::Value = serde_json::from_slice(payload).map_err(|_| DecodeErrorKind::MalformedJson)?;
    TelemetryMessage::from_value(&value).map_err(|_| DecodeErrorKind::SchemaViolation)
}

pub fn encode(msg: &TelemetryMessage) -> Result<Vec<u8>, EncodeError> {
    FrameCodec::default().encode(msg)
}

pub fn decode(stream: &[u8]) -> DecodeOutcome {
    FrameCodec::default().decode(stream)
}

/// Streaming decoder holding the unconsumed tail between feeds.
#[derive(Debug, Clone, Default)]
pub struct FrameDecoder {
    codec: FrameCodec,
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new(codec: FrameCodec) -> Self {
        FrameDecoder { codec, buf: Vec::new() }
    }

    /// `consumed` counts bytes retired from the internal buffer by this call.
    pub fn feed(&mut self, chunk: &[u8]) -> DecodeOutcome {
        self.buf.extend_from_slice(chunk);
        let out = self.codec.decode(&self.buf);
        self.buf.drain(..out.consumed);
        out
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}
