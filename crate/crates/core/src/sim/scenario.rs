//! Line-oriented scenario scripts.
//!
//! ```text
//! seed 42
//! duration 600000
//! detector night=0.30,0.10 latency=700
//! space s1 roi=100,100,150,150 mode=full
//! at 1000 s1 vehicle_arrive
//! at 5000 s1 impact g=2.0
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::detection::{ConfidenceModel, DetectorConfig, Light};
use crate::error::ConfigError;
use crate::fusion::FusionMode;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    VehicleArrive,
    VehicleDepart,
    Pedestrian,
    Impact { g: f64 },
    Tilt { deg: f64 },
    Light(Light),
    LinkLoss { p: f64 },
    Occlusion(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub t: u64,
    pub space_id: String,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSpec {
    pub id: String,
    pub terminal_id: String,
    /// x, y, w, h in detector input pixels.
    pub roi: [f64; 4],
    pub mode: FusionMode,
}

/// Optional overrides of the synthetic detector model.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DetectorOverride {
    pub day: Option<ConfidenceModel>,
    pub night: Option<ConfidenceModel>,
    pub occluded: Option<ConfidenceModel>,
    /// Poisson rate and confidence model of clutter boxes.
    pub clutter: Option<(f64, ConfidenceModel)>,
    pub latency_ms: Option<u64>,
}

impl DetectorOverride {
    pub fn apply(&self, cfg: &mut DetectorConfig) {
        if let Some(m) = self.day {
            cfg.synthetic.daylight = m;
        }
        if let Some(m) = self.night {
            cfg.synthetic.night = m;
        }
        if let Some(m) = self.occluded {
            cfg.synthetic.occluded = m;
        }
        if let Some((rate, m)) = self.clutter {
            cfg.synthetic.clutter_rate = rate;
            cfg.synthetic.clutter = m;
        }
        if let Some(l) = self.latency_ms {
            cfg.simulated_latency_ms = l;
        }
    }

    fn is_empty(&self) -> bool {
        *self == DetectorOverride::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub duration_ms: u64,
    pub detector: DetectorOverride,
    pub spaces: Vec<SpaceSpec>,
    /// Sorted by time; ties keep script order.
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError { line: 0, message: format!("{}: {e}", path.display()) })?;
        text.parse()
    }

    pub fn space(&self, id: &str) -> Option<&SpaceSpec> {
        self.spaces.iter().find(|s| s.id == id)
    }
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError { line, message: message.into() })
}

fn parse_num<T: FromStr>(line: usize, what: &str, s: &str) -> Result<T, ScenarioError> {
    s.parse().or_else(|_| err(line, format!("invalid {what} {s:?}")))
}

fn parse_finite(line: usize, what: &str, s: &str) -> Result<f64, ScenarioError> {
    let v: f64 = parse_num(line, what, s)?;
    if !v.is_finite() {
        return err(line, format!("{what} must be finite"));
    }
    Ok(v)
}

fn parse_pair(line: usize, what: &str, s: &str) -> Result<(f64, f64), ScenarioError> {
    match s.split_once(',') {
        Some((a, b)) => Ok((parse_finite(line, what, a)?, parse_finite(line, what, b)?)),
        None => err(line, format!("{what} expects two comma-separated numbers")),
    }
}

fn parse_model(line: usize, what: &str, s: &str) -> Result<ConfidenceModel, ScenarioError> {
    let (mean, sd) = parse_pair(line, what, s)?;
    if !(0.0..=1.0).contains(&mean) || sd < 0.0 {
        return err(line, format!("{what} needs mean in [0, 1] and sd >= 0"));
    }
    Ok(ConfidenceModel { mean, sd })
}

/// Split `k=v` tokens, rejecting repeats and anything not in `allowed`.
fn params<'a>(line: usize, tokens: &[&'a str], allowed: &[&str]) -> Result<BTreeMap<&'a str, &'a str>, ScenarioError> {
    let mut map = BTreeMap::new();
    for tok in tokens {
        let Some((k, v)) = tok.split_once('=') else {
            return err(line, format!("expected key=value, got {tok:?}"));
        };
        if !allowed.contains(&k) {
            return err(line, format!("unknown parameter {k:?}"));
        }
        if map.insert(k, v).is_some() {
            return err(line, format!("parameter {k:?} given twice"));
        }
    }
    Ok(map)
}

fn required<'a>(line: usize, map: &BTreeMap<&str, &'a str>, key: &str) -> Result<&'a str, ScenarioError> {
    map.get(key).copied().ok_or_else(|| ScenarioError { line, message: format!("missing {key}=") })
}

fn parse_event(line: usize, kind: &str, rest: &[&str]) -> Result<EventKind, ScenarioError> {
    let bare = |k: EventKind| -> Result<EventKind, ScenarioError> {
        params(line, rest, &[])?;
        Ok(k)
    };
    match kind {
        "vehicle_arrive" => bare(EventKind::VehicleArrive),
        "vehicle_depart" => bare(EventKind::VehicleDepart),
        "pedestrian" => bare(EventKind::Pedestrian),
        "impact" => {
            let p = params(line, rest, &["g"])?;
            let g = parse_finite(line, "g", required(line, &p, "g")?)?;
            if g <= 0.0 {
                return err(line, "impact magnitude must be positive");
            }
            Ok(EventKind::Impact { g })
        }
        "tilt" => {
            let p = params(line, rest, &["deg"])?;
            let deg = parse_finite(line, "deg", required(line, &p, "deg")?)?;
            if !(0.0..=180.0).contains(&deg) {
                return err(line, "tilt angle must be in [0, 180]");
            }
            Ok(EventKind::Tilt { deg })
        }
        "light" => {
            let p = params(line, rest, &["cond"])?;
            match required(line, &p, "cond")? {
                "day" => Ok(EventKind::Light(Light::Day)),
                "night" => Ok(EventKind::Light(Light::Night)),
                other => err(line, format!("light cond must be day or night, got {other:?}")),
            }
        }
        "link_loss" => {
            let p = params(line, rest, &["p"])?;
            let prob = parse_finite(line, "p", required(line, &p, "p")?)?;
            if !(0.0..=1.0).contains(&prob) {
                return err(line, "link_loss probability must be in [0, 1]");
            }
            Ok(EventKind::LinkLoss { p: prob })
        }
        "occlusion" => {
            let p = params(line, rest, &["state"])?;
            match required(line, &p, "state")? {
                "on" => Ok(EventKind::Occlusion(true)),
                "off" => Ok(EventKind::Occlusion(false)),
                other => err(line, format!("occlusion state must be on or off, got {other:?}")),
            }
        }
        other => err(line, format!("unknown event kind {other:?}")),
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, ScenarioError> {
        let mut seed = None;
        let mut duration = None;
        let mut detector = None;
        let mut spaces: Vec<SpaceSpec> = Vec::new();
        let mut terminals = BTreeSet::new();
        let mut events = Vec::new();
        let mut last_t = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            match tokens[0] {
                "seed" | "duration" => {
                    let [key, value] = tokens[..] else {
                        return err(line, format!("{} takes one value", tokens[0]));
                    };
                    let slot = if key == "seed" { &mut seed } else { &mut duration };
                    if slot.is_some() {
                        return err(line, format!("{key} given twice"));
                    }
                    *slot = Some(parse_num::<u64>(line, key, value)?);
                }
                "detector" => {
                    if detector.is_some() {
                        return err(line, "detector given twice");
                    }
                    let p = params(line, &tokens[1..], &["day", "night", "occluded", "clutter", "latency"])?;
                    let mut d = DetectorOverride::default();
                    for (k, v) in p {
                        match k {
                            "day" => d.day = Some(parse_model(line, k, v)?),
                            "night" => d.night = Some(parse_model(line, k, v)?),
                            "occluded" => d.occluded = Some(parse_model(line, k, v)?),
                            "clutter" => {
                                let (rate, rest) = v.split_once(',').ok_or_else(|| ScenarioError {
                                    line,
                                    message: "clutter expects rate,mean,sd".into(),
                                })?;
                                let rate = parse_finite(line, "clutter rate", rate)?;
                                if rate < 0.0 {
                                    return err(line, "clutter rate must be nonnegative");
                                }
                                d.clutter = Some((rate, parse_model(line, k, rest)?));
                            }
                            _ => d.latency_ms = Some(parse_num(line, "latency", v)?),
                        }
                    }
                    detector = Some(d);
                }
                "space" => {
                    let Some(id) = tokens.get(1).filter(|t| !t.contains('=')) else {
                        return err(line, "space needs an id");
                    };
                    if spaces.iter().any(|s| s.id == *id) {
                        return err(line, format!("space {id} declared twice"));
                    }
                    let p = params(line, &tokens[2..], &["roi", "mode", "tid"])?;
                    let roi_text = required(line, &p, "roi")?;
                    let parts: Vec<&str> = roi_text.split(',').collect();
                    if parts.len() != 4 {
                        return err(line, "roi expects x,y,w,h");
                    }
                    let mut roi = [0.0; 4];
                    for (slot, part) in roi.iter_mut().zip(&parts) {
                        *slot = parse_finite(line, "roi", part)?;
                    }
                    if roi[0] < 0.0 || roi[1] < 0.0 || roi[2] <= 0.0 || roi[3] <= 0.0 {
                        return err(line, "roi needs nonnegative origin and positive size");
                    }
                    let mode = match p.get("mode") {
                        Some(m) => m.parse().or_else(|e: ConfigError| err(line, e.to_string()))?,
                        None => FusionMode::Full,
                    };
                    let terminal_id = p.get("tid").map_or_else(|| format!("t-{id}"), |t| t.to_string());
                    if !terminals.insert(terminal_id.clone()) {
                        return err(line, format!("terminal {terminal_id} used twice"));
                    }
                    spaces.push(SpaceSpec { id: id.to_string(), terminal_id, roi, mode });
                }
                "at" => {
                    if tokens.len() < 4 {
                        return err(line, "expected: at <ms> <space_id> <kind> [k=v ...]");
                    }
                    let t: u64 = parse_num(line, "time", tokens[1])?;
                    if t < last_t {
                        return err(line, format!("event at {t} ms precedes earlier event at {last_t} ms"));
                    }
                    let space_id = tokens[2];
                    if !spaces.iter().any(|s| s.id == space_id) {
                        return err(line, format!("undeclared space {space_id:?}"));
                    }
                    let kind = parse_event(line, tokens[3], &tokens[4..])?;
                    if duration.is_some_and(|d| t > d) {
                        return err(line, format!("event at {t} ms is past the duration"));
                    }
                    last_t = t;
                    events.push(ScenarioEvent { t, space_id: space_id.to_string(), kind });
                }
                other => return err(line, format!("unknown directive {other:?}")),
            }
        }
        let Some(duration_ms) = duration else {
            return err(0, "missing duration");
        };
        if duration_ms == 0 {
            return err(0, "duration must be positive");
        }
        if let Some(e) = events.iter().find(|e| e.t > duration_ms) {
            return err(0, format!("event at {} ms is past the duration", e.t));
        }
        if spaces.is_empty() {
            return err(0, "no spaces declared");
        }
        Ok(Scenario { seed: seed.unwrap_or(0), duration_ms, detector: detector.unwrap_or_default(), spaces, events })
    }
}

fn fmt_model(m: ConfidenceModel) -> String {
    format!("{},{}", m.mean, m.sd)
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::VehicleArrive => write!(f, "vehicle_arrive"),
            EventKind::VehicleDepart => write!(f, "vehicle_depart"),
            EventKind::Pedestrian => write!(f, "pedestrian"),
            EventKind::Impact { g } => write!(f, "impact g={g}"),
            EventKind::Tilt { deg } => write!(f, "tilt deg={deg}"),
            EventKind::Light(Light::Day) => write!(f, "light cond=day"),
            EventKind::Light(Light::Night) => write!(f, "light cond=night"),
            EventKind::LinkLoss { p } => write!(f, "link_loss p={p}"),
            EventKind::Occlusion(on) => write!(f, "occlusion state={}", if *on { "on" } else { "off" }),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        writeln!(f, "duration {}", self.duration_ms)?;
        if !self.detector.is_empty() {
            let d = &self.detector;
            let mut parts = Vec::new();
            if let Some(m) = d.day {
                parts.push(format!("day={}", fmt_model(m)));
            }
            if let Some(m) = d.night {
                parts.push(format!("night={}", fmt_model(m)));
            }
            if let Some(m) = d.occluded {
                parts.push(format!("occluded={}", fmt_model(m)));
            }
            if let Some((rate, m)) = d.clutter {
                parts.push(format!("clutter={rate},{}", fmt_model(m)));
            }
            if let Some(l) = d.latency_ms {
                parts.push(format!("latency={l}"));
            }
            writeln!(f, "detector {}", parts.join(" "))?;
        }
        for s in &self.spaces {
            let [x, y, w, h] = s.roi;
            writeln!(f, "space {} roi={x},{y},{w},{h} mode={} tid={}", s.id, s.mode, s.terminal_id)?;
        }
        for e in &self.events {
            writeln!(f, "at {} {} {}", e.t, e.space_id, e.kind)?;
        }
        Ok(())
    }
}
