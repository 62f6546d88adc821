//! Piecewise-constant power ledger.
//!
//! Base load and IR standby are on in every segment; camera and inference
//! are charged for the intervals the detector runs. Energy is accumulated in
//! integer microwatt-milliseconds (nanojoules) so splitting a window never
//! loses precision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PowerError {
    #[error("empty interval [{from}, {to})")]
    EmptyInterval { from: u64, to: u64 },
    #[error("time regression: charge from {from} precedes previous charge at {frontier}")]
    TimeRegression { from: u64, frontier: u64 },
    #[error("window [{from}, {to}) outside ledger coverage [{start}, {end})")]
    OutsideCoverage { from: u64, to: u64, start: u64, end: u64 },
    #[error("always-on power is zero")]
    ZeroReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerModel {
    pub base_w: f64,
    pub ir_standby_w: f64,
    pub camera_w: f64,
    pub inference_w: f64,
    /// Measured always-on figure; kept separate from the component sum.
    pub always_on_w: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel { base_w: 0.8, ir_standby_w: 0.12, camera_w: 1.2, inference_w: 1.8, always_on_w: 4.02 }
    }
}

fn to_uw(w: f64) -> u64 {
    (w * 1e6).round() as u64
}

impl PowerModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [self.base_w, self.ir_standby_w, self.camera_w, self.inference_w, self.always_on_w];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::Invalid("power model values must be finite and nonnegative".into()));
        }
        if self.always_on_w < self.base_w + self.ir_standby_w {
            return Err(ConfigError::Invalid("always_on_w must cover base and IR standby".into()));
        }
        Ok(())
    }

    pub fn standby_w(&self) -> f64 {
        self.component_uw(Components::STANDBY) as f64 / 1e6
    }

    pub fn active_w(&self) -> f64 {
        self.component_uw(Components::ACTIVE) as f64 / 1e6
    }

    fn component_uw(&self, c: Components) -> u64 {
        let mut uw = 0;
        if c.contains(Components::BASE) {
            uw += to_uw(self.base_w);
        }
        if c.contains(Components::IR) {
            uw += to_uw(self.ir_standby_w);
        }
        if c.contains(Components::CAMERA) {
            uw += to_uw(self.camera_w);
        }
        if c.contains(Components::INFERENCE) {
            uw += to_uw(self.inference_w);
        }
        uw
    }
}

/// Bit set over {base, ir, camera, inference}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Components(u8);

impl Components {
    pub const BASE: Components = Components(1);
    pub const IR: Components = Components(2);
    pub const CAMERA: Components = Components(4);
    pub const INFERENCE: Components = Components(8);
    pub const STANDBY: Components = Components(1 | 2);
    pub const DETECTOR: Components = Components(4 | 8);
    pub const ACTIVE: Components = Components(15);

    pub fn contains(self, other: Components) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn union(self, other: Components) -> Components {
        Components(self.0 | other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: u64,
    pub end: u64,
    pub components: Components,
}

/// Contiguous, non-overlapping segments from `start` to the frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLedger {
    model: PowerModel,
    start: u64,
    segments: Vec<Segment>,
    last_charge_from: u64,
    energy_nj: u128,
}

impl PowerLedger {
    pub fn new(model: PowerModel, start: u64) -> Self {
        PowerLedger { model, start, segments: Vec::new(), last_charge_from: start, energy_nj: 0 }
    }

    pub fn model(&self) -> &PowerModel {
        &self.model
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn frontier(&self) -> u64 {
        self.segments.last().map_or(self.start, |s| s.end)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Total energy from start to the frontier, joules.
    pub fn energy_j(&self) -> f64 {
        self.energy_nj as f64 / 1e9
    }

    fn seg_energy(&self, s: &Segment) -> u128 {
        self.model.component_uw(s.components) as u128 * (s.end - s.start) as u128
    }

    fn push(&mut self, seg: Segment) {
        if seg.end <= seg.start {
            return;
        }
        self.energy_nj += self.seg_energy(&seg);
        if let Some(last) = self.segments.last_mut() {
            if last.components == seg.components && last.end == seg.start {
                last.end = seg.end;
                return;
            }
        }
        self.segments.push(seg);
    }

    /// Extend standby coverage up to `to`.
    pub fn advance(&mut self, to: u64) {
        let f = self.frontier();
        if to > f {
            self.push(Segment { start: f, end: to, components: Components::STANDBY });
        }
    }

    /// Mark `component` active on exactly `[from, to)`, splitting existing
    /// segments and extending coverage as needed. Charges must arrive in
    /// nondecreasing `from` order.
    pub fn charge(&mut self, component: Components, from: u64, to: u64) -> Result<(), PowerError> {
        if from >= to {
            return Err(PowerError::EmptyInterval { from, to });
        }
        if from < self.last_charge_from || from < self.start {
            return Err(PowerError::TimeRegression { from, frontier: self.last_charge_from.max(self.start) });
        }
        self.last_charge_from = from;
        self.advance(to);
        let first = self.segments.partition_point(|s| s.end <= from);
        let tail: Vec<Segment> = self.segments.drain(first..).collect();
        for s in &tail {
            self.energy_nj -= self.seg_energy(s);
        }
        for s in tail {
            let cuts = [s.start, from.clamp(s.start, s.end), to.clamp(s.start, s.end), s.end];
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                let inside = a >= from && b <= to;
                let components = if inside { s.components.union(component) } else { s.components };
                self.push(Segment { start: a, end: b, components });
            }
        }
        Ok(())
    }

    /// Energy over `[from, to)` in nanojoules.
    pub fn energy_between_nj(&self, from: u64, to: u64) -> Result<u128, PowerError> {
        if from >= to {
            return Err(PowerError::EmptyInterval { from, to });
        }
        let end = self.frontier();
        if from < self.start || to > end {
            return Err(PowerError::OutsideCoverage { from, to, start: self.start, end });
        }
        Ok(self
            .segments
            .iter()
            .filter(|s| s.end > from && s.start < to)
            .map(|s| {
                let (a, b) = (s.start.max(from), s.end.min(to));
                self.model.component_uw(s.components) as u128 * (b - a) as u128
            })
            .sum())
    }

    pub fn average_power(&self, from: u64, to: u64) -> Result<f64, PowerError> {
        let nj = self.energy_between_nj(from, to)?;
        Ok(nj as f64 / (to - from) as f64 / 1e6)
    }

    /// Time the detector components were on, within `[from, to)`.
    pub fn active_ms(&self, from: u64, to: u64) -> u64 {
        self.segments
            .iter()
            .filter(|s| s.components.contains(Components::CAMERA) && s.end > from && s.start < to)
            .map(|s| s.end.min(to) - s.start.max(from))
            .sum()
    }
}

pub fn savings_vs_always_on(avg_w: f64, model: &PowerModel) -> Result<f64, PowerError> {
    if model.always_on_w == 0.0 {
        return Err(PowerError::ZeroReference);
    }
    Ok((model.always_on_w - avg_w) / model.always_on_w)
}
