//! Where the gateway delivers messages: an in-process service or a remote
//! one over HTTP.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

use crate::cloud::http::RECEIVE_TS_HEADER;
use crate::cloud::{CloudMetrics, CloudService, Order, SpaceSummary};
use crate::protocol::{MessageBody, TelemetryMessage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EndpointError {
    /// Worth retrying.
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    Applied,
    Duplicate,
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudSnapshot {
    pub metrics: CloudMetrics,
    pub orders: Vec<Order>,
    pub spaces: Vec<SpaceSummary>,
}

pub trait CloudEndpoint {
    /// Announce a space before traffic starts. Remote endpoints rely on
    /// heartbeat registration instead.
    fn register(&mut self, space_id: &str, terminal_id: &str) -> Result<(), EndpointError>;
    fn deliver(&mut self, msg: &TelemetryMessage, now: u64) -> Result<Delivery, EndpointError>;
    fn sweep(&mut self, now: u64) -> Result<(), EndpointError>;
    fn snapshot(&mut self) -> Result<CloudSnapshot, EndpointError>;
}

#[derive(Debug)]
pub struct EmbeddedCloud {
    svc: CloudService,
}

impl EmbeddedCloud {
    pub fn new(svc: CloudService) -> Self {
        EmbeddedCloud { svc }
    }

    pub fn service(&self) -> &CloudService {
        &self.svc
    }

    pub fn service_mut(&mut self) -> &mut CloudService {
        &mut self.svc
    }

    pub fn into_inner(self) -> CloudService {
        self.svc
    }
}

impl CloudEndpoint for EmbeddedCloud {
    fn register(&mut self, space_id: &str, terminal_id: &str) -> Result<(), EndpointError> {
        self.svc.register_space(space_id, terminal_id);
        Ok(())
    }

    fn deliver(&mut self, msg: &TelemetryMessage, now: u64) -> Result<Delivery, EndpointError> {
        Ok(match self.svc.submit(msg, now) {
            Ok(o) if o.applied => Delivery::Applied,
            Ok(_) => Delivery::Duplicate,
            Err(e) => Delivery::Rejected(e.to_string()),
        })
    }

    fn sweep(&mut self, now: u64) -> Result<(), EndpointError> {
        self.svc.sweep(now);
        Ok(())
    }

    fn snapshot(&mut self) -> Result<CloudSnapshot, EndpointError> {
        Ok(CloudSnapshot {
            metrics: self.svc.metrics(),
            orders: self.svc.orders(None),
            spaces: self.svc.space_summaries(),
        })
    }
}

/// Remote service. Every request carries the simulated receive time.
#[derive(Debug)]
pub struct HttpCloud {
    base: String,
    agent: ureq::Agent,
}

impl HttpCloud {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpCloud { base: base_url.trim_end_matches('/').to_string(), agent }
    }

    /// Fails fast when the service cannot be reached.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self, EndpointError> {
        let c = HttpCloud::new(base_url, timeout);
        c.get::<Value>("/api/v1/metrics")
            .map_err(|e| EndpointError::Transport(format!("cloud at {} is unreachable: {e}", c.base)))?;
        Ok(c)
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn post(&self, path: &str, now: u64, body: String) -> Result<(u16, String), EndpointError> {
        let mut resp = self
            .agent
            .post(&self.url(path))
            .header("content-type", "application/json")
            .header(RECEIVE_TS_HEADER, &now.to_string())
            .send(body)
            .map_err(|e| EndpointError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| EndpointError::Transport(e.to_string()))?;
        if status >= 500 {
            return Err(EndpointError::Transport(format!("HTTP {status}: {text}")));
        }
        Ok((status, text))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, EndpointError> {
        let mut resp = self.agent.get(&self.url(path)).call().map_err(|e| EndpointError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| EndpointError::Transport(e.to_string()))?;
        if status != 200 {
            return Err(EndpointError::Protocol(format!("GET {path}: HTTP {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| EndpointError::Protocol(format!("GET {path}: {e}")))
    }
}

impl CloudEndpoint for HttpCloud {
    fn register(&mut self, _space_id: &str, _terminal_id: &str) -> Result<(), EndpointError> {
        Ok(())
    }

    fn deliver(&mut self, msg: &TelemetryMessage, now: u64) -> Result<Delivery, EndpointError> {
        let path = if matches!(msg.body, MessageBody::Heartbeat) { "/api/v1/heartbeats" } else { "/api/v1/reports" };
        let body = serde_json::to_string(msg).expect("message serializes");
        let (status, text) = self.post(path, now, body)?;
        if status != 200 {
            return Ok(Delivery::Rejected(format!("HTTP {status}: {text}")));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| EndpointError::Protocol(e.to_string()))?;
        match v.get("applied").and_then(Value::as_bool) {
            Some(true) => Ok(Delivery::Applied),
            Some(false) => Ok(Delivery::Duplicate),
            None => Err(EndpointError::Protocol(format!("missing applied flag in {text}"))),
        }
    }

    fn sweep(&mut self, now: u64) -> Result<(), EndpointError> {
        let (status, text) = self.post("/api/v1/sweep", now, String::new())?;
        if status != 200 {
            return Err(EndpointError::Protocol(format!("sweep: HTTP {status}: {text}")));
        }
        Ok(())
    }

    fn snapshot(&mut self) -> Result<CloudSnapshot, EndpointError> {
        Ok(CloudSnapshot {
            metrics: self.get("/api/v1/metrics")?,
            orders: self.get("/api/v1/orders")?,
            spaces: self.get("/api/v1/spaces")?,
        })
    }
}
