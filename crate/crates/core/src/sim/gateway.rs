//! Frame bytes in, cloud deliveries out.

use serde::Serialize;

use crate::protocol::{DecodeErrorKind, FrameCodec, FrameDecoder};

use super::endpoint::{CloudEndpoint, Delivery, EndpointError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DeliveryStats {
    pub frames: u64,
    pub delivered: u64,
    pub applied: u64,
    pub duplicates: u64,
    pub rejected: u64,
    /// Frames with a bad length, CRC or payload.
    pub corrupt: u64,
    /// Runs of bytes skipped while hunting for a frame start.
    pub noise: u64,
    pub retries: u64,
    pub transport_failures: u64,
}

#[derive(Debug, Default)]
pub struct Gateway {
    decoder: FrameDecoder,
    stats: DeliveryStats,
    last_error: Option<EndpointError>,
}

impl Gateway {
    pub fn new(codec: FrameCodec) -> Self {
        Gateway { decoder: FrameDecoder::new(codec), stats: DeliveryStats::default(), last_error: None }
    }

    pub fn stats(&self) -> DeliveryStats {
        self.stats
    }

    pub fn last_error(&self) -> Option<&EndpointError> {
        self.last_error.as_ref()
    }

    /// Bytes held back as a possible partial frame.
    pub fn pending(&self) -> usize {
        self.decoder.pending()
    }

    /// Decode `bytes` and forward every valid message, retrying once on a
    /// transport error. Nothing here is fatal; callers inspect the stats.
    pub fn bridge(&mut self, bytes: &[u8], cloud: &mut dyn CloudEndpoint, now: u64) {
        let out = self.decoder.feed(bytes);
        for e in &out.errors {
            match e.kind {
                DecodeErrorKind::BadMagic => self.stats.noise += 1,
                _ => self.stats.corrupt += 1,
            }
        }
        for msg in out.messages {
            self.stats.frames += 1;
            let mut result = cloud.deliver(&msg, now);
            if matches!(result, Err(EndpointError::Transport(_))) {
                self.stats.retries += 1;
                result = cloud.deliver(&msg, now);
            }
            match result {
                Ok(d) => {
                    self.stats.delivered += 1;
                    match d {
                        Delivery::Applied => self.stats.applied += 1,
                        Delivery::Duplicate => self.stats.duplicates += 1,
                        Delivery::Rejected(reason) => {
                            log::debug!("rejected seq {} from {}: {reason}", msg.seq, msg.sid);
                            self.stats.rejected += 1;
                        }
                    }
                }
                Err(e) => {
                    log::warn!("delivery of seq {} from {} failed: {e}", msg.seq, msg.sid);
                    self.stats.transport_failures += 1;
                    self.last_error = Some(e);
                }
            }
        }
    }
}

/// One-shot bridge over a complete byte stream.
pub fn gateway_bridge(bytes: &[u8], cloud: &mut dyn CloudEndpoint, now: u64) -> DeliveryStats {
    let mut g = Gateway::default();
    g.bridge(bytes, cloud, now);
    g.stats()
}
