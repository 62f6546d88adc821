//! Telemetry message schema with compact keys.
//!
//! Serialization writes keys in a fixed order with numbers rounded to three
//! decimals, so the same message always produces the same bytes.

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum OccupancyReason {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "ir")]
    InfraredOcclusion,
    #[serde(rename = "visual")]
    VisualConfirmation,
    #[serde(rename = "collision")]
    CollisionFallback,
}

impl OccupancyReason {
    pub fn wire_name(self) -> &'static str {
        match self {
            OccupancyReason::None => "none",
            OccupancyReason::InfraredOcclusion => "ir",
            OccupancyReason::VisualConfirmation => "visual",
            OccupancyReason::CollisionFallback => "collision",
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        Some(match s {
            "none" => OccupancyReason::None,
            "ir" => OccupancyReason::InfraredOcclusion,
            "visual" => OccupancyReason::VisualConfirmation,
            "collision" => OccupancyReason::CollisionFallback,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlarmKind {
    Tilt,
    Obstructed,
    Offline,
}

impl AlarmKind {
    fn wire_name(self) -> &'static str {
        match self {
            AlarmKind::Tilt => "tilt",
            AlarmKind::Obstructed => "obstructed",
            AlarmKind::Offline => "offline",
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        Some(match s {
            "tilt" => AlarmKind::Tilt,
            "obstructed" => AlarmKind::Obstructed,
            "offline" => AlarmKind::Offline,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warn,
    Critical,
}

impl Severity {
    fn wire_name(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warn => "warn",
            Severity::Critical => "critical",
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        Some(match s {
            "info" => Severity::Info,
            "warn" => Severity::Warn,
            "critical" => Severity::Critical,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MessageBody {
    Report { occ: bool, conf: f64, rsn: OccupancyReason, dist: f64 },
    Heartbeat,
    Alarm { akind: AlarmKind, sev: Severity },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryMessage {
    pub sid: String,
    pub tid: String,
    pub seq: u64,
    /// Unix milliseconds, edge clock.
    pub ts: u64,
    pub tilt: f64,
    pub pwr: f64,
    pub body: MessageBody,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("schema violation: {0}")]
pub struct SchemaError(pub String);

pub fn quantize(x: f64) -> f64 {
    let q = (x * 1000.0).round() / 1000.0;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

impl TelemetryMessage {
    pub fn type_name(&self) -> &'static str {
        match self.body {
            MessageBody::Report { .. } => "report",
            MessageBody::Heartbeat => "heartbeat",
            MessageBody::Alarm { .. } => "alarm",
        }
    }

    pub fn is_report(&self) -> bool {
        matches!(self.body, MessageBody::Report { .. })
    }

    /// Numbers rounded to the precision they are encoded with.
    pub fn quantized(&self) -> Self {
        let mut m = self.clone();
        m.tilt = quantize(m.tilt);
        m.pwr = quantize(m.pwr);
        if let MessageBody::Report { conf, dist, .. } = &mut m.body {
            *conf = quantize(*conf);
            *dist = quantize(*dist);
        }
        m
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let bad = |m: String| Err(SchemaError(m));
        if self.sid.is_empty() || self.tid.is_empty() {
            return bad("sid and tid must be nonempty".into());
        }
        if !(self.tilt.is_finite() && (0.0..=180.0).contains(&self.tilt)) {
            return bad(format!("tilt {} outside [0, 180]", self.tilt));
        }
        if !(self.pwr.is_finite() && self.pwr >= 0.0) {
            return bad(format!("pwr {} must be nonnegative", self.pwr));
        }
        if let MessageBody::Report { conf, dist, .. } = self.body {
            if !(conf.is_finite() && (0.0..=1.0).contains(&conf)) {
                return bad(format!("conf {conf} outside [0, 1]"));
            }
            if !(dist.is_finite() && dist >= 0.0) {
                return bad(format!("dist {dist} must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn from_value(v: &Value) -> Result<Self, SchemaError> {
        let obj = v.as_object().ok_or_else(|| SchemaError("payload is not an object".into()))?;
        let ty = str_field(obj, "type")?;
        let allowed: &[&str] = match ty {
            "report" => &["type", "sid", "tid", "seq", "ts", "occ", "conf", "rsn", "dist", "tilt", "pwr"],
            "heartbeat" => &["type", "sid", "tid", "seq", "ts", "tilt", "pwr"],
            "alarm" => &["type", "sid", "tid", "seq", "ts", "tilt", "pwr", "akind", "sev"],
            other => return Err(SchemaError(format!("unknown message type {other:?}"))),
        };
        if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(SchemaError(format!("unexpected field {k:?} for {ty}")));
        }
        let body = match ty {
            "report" => {
                let rsn = str_field(obj, "rsn")?;
                MessageBody::Report {
                    occ: obj
                        .get("occ")
                        .and_then(Value::as_bool)
                        .ok_or_else(|| SchemaError("missing or non-boolean occ".into()))?,
                    conf: num_field(obj, "conf")?,
                    rsn: OccupancyReason::from_wire(rsn).ok_or_else(|| SchemaError(format!("unknown rsn {rsn:?}")))?,
                    dist: num_field(obj, "dist")?,
                }
            }
            "heartbeat" => MessageBody::Heartbeat,
            _ => {
                let akind = str_field(obj, "akind")?;
                let sev = str_field(obj, "sev")?;
                MessageBody::Alarm {
                    akind: AlarmKind::from_wire(akind)
                        .ok_or_else(|| SchemaError(format!("unknown akind {akind:?}")))?,
                    sev: Severity::from_wire(sev).ok_or_else(|| SchemaError(format!("unknown sev {sev:?}")))?,
                }
            }
        };
        let msg = TelemetryMessage {
            sid: str_field(obj, "sid")?.to_string(),
            tid: str_field(obj, "tid")?.to_string(),
            seq: uint_field(obj, "seq")?,
            ts: uint_field(obj, "ts")?,
            tilt: num_field(obj, "tilt")?,
            pwr: num_field(obj, "pwr")?,
            body,
        };
        msg.validate()?;
        Ok(msg)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("message serializes")
    }
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, SchemaError> {
    obj.get(key).and_then(Value::as_str).ok_or_else(|| SchemaError(format!("missing or non-string {key}")))
}

fn num_field(obj: &Map<String, Value>, key: &str) -> Result<f64, SchemaError> {
    obj.get(key).and_then(Value::as_f64).ok_or_else(|| SchemaError(format!("missing or non-numeric {key}")))
}

fn uint_field(obj: &Map<String, Value>, key: &str) -> Result<u64, SchemaError> {
    obj.get(key).and_then(Value::as_u64).ok_or_else(|| SchemaError(format!("missing or non-integer {key}")))
}

impl Serialize for TelemetryMessage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        map.serialize_entry("type", self.type_name())?;
        map.serialize_entry("sid", &self.sid)?;
        map.serialize_entry("tid", &self.tid)?;
        map.serialize_entry("seq", &self.seq)?;
        map.serialize_entry("ts", &self.ts)?;
        if let MessageBody::Report { occ, conf, rsn, dist } = self.body {
            map.serialize_entry("occ", &occ)?;
            map.serialize_entry("conf", &quantize(conf))?;
            map.serialize_entry("rsn", rsn.wire_name())?;
            map.serialize_entry("dist", &quantize(dist))?;
        }
        map.serialize_entry("tilt", &quantize(self.tilt))?;
        map.serialize_entry("pwr", &quantize(self.pwr))?;
        if let MessageBody::Alarm { akind, sev } = self.body {
            map.serialize_entry("akind", akind.wire_name())?;
            map.serialize_entry("sev", sev.wire_name())?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for TelemetryMessage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        TelemetryMessage::from_value(&v).map_err(D::Error::custom)
    }
}
