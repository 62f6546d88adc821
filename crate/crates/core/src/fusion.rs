//! Per-space edge node.
//!
//! IR is the cheap always-on trigger, vision confirms, and a recent impact
//! lets the node fall back to a conservative occupied decision when vision
//! cannot confirm. Vision runs on a rising IR edge or when a poll is due in
//! a state that needs confirmation; every run occupies simulated time and is
//! charged to the power ledger.
//!
//! Transitions:
//!
//! | from      | on                                              | to                |
//! |-----------|-------------------------------------------------|-------------------|
//! | Vacant    | rising IR edge                                  | Sensing           |
//! | Sensing   | vehicle seen                                    | OccupiedVisual    |
//! | Sensing   | miss, impact in lookback, IR triggered          | OccupiedCollision |
//! | Sensing   | miss, IR released                               | Vacant            |
//! | Sensing   | K-th consecutive miss, IR triggered             | Vacant + Obstructed alarm |
//! | Occupied* | M consecutive polls with IR released and a miss | Vacant            |

use serde::{Deserialize, Serialize};

use crate::config::NodeConfig;
use crate::detection::{Detector, Scene, SpaceRoi, VisionPipeline, VisionVerdict};
use crate::error::ConfigError;
use crate::inertial::{AccelSample, InertialEvent, InertialState};
use crate::ir::{IrChannel, IrReading, TriggerEdge};
use crate::power::{Components, PowerLedger};
use crate::protocol::{AlarmKind, MessageBody, OccupancyReason, Severity, TelemetryMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyState {
    Vacant,
    Sensing,
    OccupiedVisual,
    OccupiedCollision,
    /// Only reachable in `ir_only` mode.
    OccupiedInfrared,
}

impl OccupancyState {
    pub fn is_occupied(self) -> bool {
        matches!(
            self,
            OccupancyState::OccupiedVisual | OccupancyState::OccupiedCollision | OccupancyState::OccupiedInfrared
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    Full,
    VisionOnly,
    NoInertial,
    IrOnly,
}

impl FusionMode {
    pub fn uses_ir_trigger(self) -> bool {
        !matches!(self, FusionMode::VisionOnly)
    }

    pub fn uses_vision(self) -> bool {
        !matches!(self, FusionMode::IrOnly)
    }

    pub fn uses_inertial_fallback(self) -> bool {
        matches!(self, FusionMode::Full)
    }
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Full => "full",
            FusionMode::VisionOnly => "vision_only",
            FusionMode::NoInertial => "no_inertial",
            FusionMode::IrOnly => "ir_only",
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FusionMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "full" => FusionMode::Full,
            "vision_only" => FusionMode::VisionOnly,
            "no_inertial" => FusionMode::NoInertial,
            "ir_only" => FusionMode::IrOnly,
            other => return Err(ConfigError::Invalid(format!("unknown mode {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSettings {
    pub mode: FusionMode,
    /// Consecutive failed confirmations before giving up on Sensing.
    pub max_failed_confirms: u32,
    /// Consecutive empty occupied polls before vacating.
    pub vacate_polls: u32,
    pub idle_poll_ms: u64,
    pub occupied_poll_ms: u64,
    pub tilt_alarm_interval_ms: u64,
    pub heartbeat_interval_ms: u64,
    pub occupancy_threshold: f64,
    /// Re-run vision on occupied polls; otherwise IR alone decides vacating.
    pub occupied_poll_vision: bool,
}

impl Default for FusionSettings {
    fn default() -> Self {
        FusionSettings {
            mode: FusionMode::Full,
            max_failed_confirms: 3,
            vacate_polls: 2,
            idle_poll_ms: 5_000,
            occupied_poll_ms: 10_000,
            tilt_alarm_interval_ms: 60_000,
            heartbeat_interval_ms: 30_000,
            occupancy_threshold: 0.25,
            occupied_poll_vision: true,
        }
    }
}

/// One time-stamped bundle of sensor inputs for a space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame {
    pub t: u64,
    pub ir_voltage: f64,
    pub accel: AccelSample,
    pub scene: Scene,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PendingDetection {
    started: u64,
    ready_at: u64,
    verdict: VisionVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct NodeStats {
    pub steps: u64,
    pub ir_samples: u64,
    pub detector_invocations: u64,
    pub dropped_frames: u64,
    pub emitted: u64,
}

pub struct SpaceNode {
    space_id: String,
    terminal_id: String,
    roi: SpaceRoi,
    settings: FusionSettings,
    pipeline: VisionPipeline,
    detector: Box<dyn Detector + Send>,
    ir: IrChannel,
    inertial: InertialState,
    lookback_ms: u64,
    occ: OccupancyState,
    reason: OccupancyReason,
    failed_confirms: u32,
    vacate_streak: u32,
    seq: u64,
    next_poll_t: u64,
    next_heartbeat_t: u64,
    last_step_t: Option<u64>,
    last_tilt_alarm_t: Option<u64>,
    last_reading: Option<IrReading>,
    last_verdict: VisionVerdict,
    pending: Option<PendingDetection>,
    ledger: PowerLedger,
    stats: NodeStats,
}

impl std::fmt::Debug for SpaceNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpaceNode")
            .field("space_id", &self.space_id)
            .field("occ", &self.occ)
            .field("seq", &self.seq)
            .field("next_poll_t", &self.next_poll_t)
            .finish_non_exhaustive()
    }
}

impl SpaceNode {
    pub fn new(
        config: &NodeConfig,
        space_id: impl Into<String>,
        terminal_id: impl Into<String>,
        roi: SpaceRoi,
        detector: Box<dyn Detector + Send>,
        start_t: u64,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(SpaceNode {
            space_id: space_id.into(),
            terminal_id: terminal_id.into(),
            roi,
            settings: config.fusion,
            pipeline: VisionPipeline::new(&config.detector, config.fusion.occupancy_threshold),
            detector,
            ir: IrChannel::new(config.calibration.clone(), config.ir)?,
            inertial: InertialState::new(config.inertial),
            lookback_ms: config.inertial.lookback_ms,
            occ: OccupancyState::Vacant,
            reason: OccupancyReason::None,
            failed_confirms: 0,
            vacate_streak: 0,
            seq: 0,
            next_poll_t: start_t,
            next_heartbeat_t: start_t,
            last_step_t: None,
            last_tilt_alarm_t: None,
            last_reading: None,
            last_verdict: VisionVerdict::absent(),
            pending: None,
            ledger: PowerLedger::new(config.power, start_t),
            stats: NodeStats::default(),
        })
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn terminal_id(&self) -> &str {
        &self.terminal_id
    }

    pub fn roi(&self) -> &SpaceRoi {
        &self.roi
    }

    pub fn state(&self) -> OccupancyState {
        self.occ
    }

    pub fn reason(&self) -> OccupancyReason {
        self.reason
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn next_poll_t(&self) -> u64 {
        self.next_poll_t
    }

    pub fn failed_confirms(&self) -> u32 {
        self.failed_confirms
    }

    pub fn vacate_streak(&self) -> u32 {
        self.vacate_streak
    }

    pub fn ir(&self) -> &IrChannel {
        &self.ir
    }

    pub fn inertial(&self) -> &InertialState {
        &self.inertial
    }

    pub fn ledger(&self) -> &PowerLedger {
        &self.ledger
    }

    /// Extend standby coverage of the power ledger to `t`.
    pub fn advance_ledger(&mut self, t: u64) {
        self.ledger.advance(t);
    }

    pub fn stats(&self) -> NodeStats {
        self.stats
    }

    pub fn settings(&self) -> &FusionSettings {
        &self.settings
    }

    pub fn detection_in_flight(&self) -> bool {
        self.pending.is_some()
    }

    /// Earliest time the node needs to be stepped again.
    pub fn next_wakeup(&self) -> u64 {
        let mut t = self.next_poll_t.min(self.next_heartbeat_t);
        if let Some(p) = self.pending {
            t = t.min(p.ready_at);
        }
        t
    }

    pub fn schedule_next(&self, now: u64) -> u64 {
        if self.occ.is_occupied() {
            now + self.settings.occupied_poll_ms
        } else {
            now + self.settings.idle_poll_ms
        }
    }

    pub fn step(&mut self, now: u64, frame: &SensorFrame) -> Vec<TelemetryMessage> {
        let mut out = Vec::new();
        if self.last_step_t.is_some_and(|t| now < t) || !frame.ir_voltage.is_finite() {
            self.stats.dropped_frames += 1;
            return out;
        }
        self.last_step_t = Some(now);
        self.stats.steps += 1;
        self.ledger.advance(now);

        let reading = self.ir.sample(frame.ir_voltage);
        self.last_reading = Some(reading);
        self.stats.ir_samples += 1;
        let edge = if self.settings.mode.uses_ir_trigger() { reading.edge } else { TriggerEdge::None };

        for ev in self.inertial.ingest(&frame.accel) {
            if ev == InertialEvent::TiltAlarmOn {
                self.emit_tilt_alarm(now, &mut out);
            }
        }
        if self.inertial.tilt_alarm_active()
            && self.last_tilt_alarm_t.is_some_and(|t| now - t >= self.settings.tilt_alarm_interval_ms)
        {
            self.emit_tilt_alarm(now, &mut out);
        }

        if let Some(p) = self.pending {
            if now >= p.ready_at {
                self.pending = None;
                self.complete_detection(now, p.verdict, &mut out);
            }
        }

        if edge == TriggerEdge::Rising && matches!(self.occ, OccupancyState::Vacant | OccupancyState::Sensing) {
            if self.settings.mode == FusionMode::IrOnly {
                self.transition(OccupancyState::OccupiedInfrared, OccupancyReason::InfraredOcclusion);
                out.push(self.build_report(&VisionVerdict::absent(), now));
                self.next_poll_t = self.schedule_next(now);
            } else if self.pending.is_none() {
                if self.occ == OccupancyState::Vacant {
                    self.transition(OccupancyState::Sensing, OccupancyReason::InfraredOcclusion);
                    out.push(self.build_report(&VisionVerdict::absent(), now));
                }
                self.start_detection(now, &frame.scene);
            }
        } else if now >= self.next_poll_t {
            self.poll(now, &frame.scene, &mut out);
        }

        if now >= self.next_heartbeat_t {
            out.push(self.build_message(now, MessageBody::Heartbeat));
            while self.next_heartbeat_t <= now {
                self.next_heartbeat_t += self.settings.heartbeat_interval_ms.max(1);
            }
        }
        self.stats.emitted += out.len() as u64;
        out
    }

    fn poll(&mut self, now: u64, scene: &Scene, out: &mut Vec<TelemetryMessage>) {
        self.next_poll_t = self.schedule_next(now);
        if self.pending.is_some() {
            return;
        }
        match self.occ {
            OccupancyState::Vacant => {
                if self.settings.mode == FusionMode::VisionOnly {
                    self.transition(OccupancyState::Sensing, OccupancyReason::None);
                    out.push(self.build_report(&VisionVerdict::absent(), now));
                    self.start_detection(now, scene);
                }
            }
            OccupancyState::Sensing => self.start_detection(now, scene),
            _ => {
                if self.settings.mode.uses_vision() && self.settings.occupied_poll_vision {
                    self.start_detection(now, scene);
                } else {
                    self.occupied_poll(now, VisionVerdict::absent(), out);
                }
            }
        }
    }

    fn start_detection(&mut self, now: u64, scene: &Scene) {
        let raw = self.detector.detect(scene, &self.roi);
        let verdict = self.pipeline.evaluate(&raw, &self.roi);
        let latency = self.detector.latency_ms().max(1);
        self.stats.detector_invocations += 1;
        self.ledger.charge(Components::DETECTOR, now, now + latency).expect("detections start in time order");
        self.pending = Some(PendingDetection { started: now, ready_at: now + latency, verdict });
    }

    fn complete_detection(&mut self, now: u64, verdict: VisionVerdict, out: &mut Vec<TelemetryMessage>) {
        self.last_verdict = verdict;
        match self.occ {
            OccupancyState::Sensing => self.confirm(now, verdict, out),
            s if s.is_occupied() => self.occupied_poll(now, verdict, out),
            OccupancyState::Vacant => {}
            _ => unreachable!(),
        }
    }

    fn ir_triggered(&self) -> bool {
        self.settings.mode.uses_ir_trigger() && self.ir.trigger().triggered()
    }

    fn confirm(&mut self, now: u64, verdict: VisionVerdict, out: &mut Vec<TelemetryMessage>) {
        if verdict.vehicle_present {
            self.transition(OccupancyState::OccupiedVisual, OccupancyReason::VisualConfirmation);
            out.push(self.build_report(&verdict, now));
            self.next_poll_t = self.schedule_next(now);
            return;
        }
        let triggered = self.ir_triggered();
        if self.settings.mode.uses_inertial_fallback()
            && triggered
            && self.inertial.impact_within(now, self.lookback_ms)
        {
            self.transition(OccupancyState::OccupiedCollision, OccupancyReason::CollisionFallback);
            out.push(self.build_report(&verdict, now));
            self.next_poll_t = self.schedule_next(now);
            return;
        }
        if !triggered {
            self.transition(OccupancyState::Vacant, OccupancyReason::None);
            out.push(self.build_report(&verdict, now));
            self.next_poll_t = self.schedule_next(now);
            return;
        }
        self.failed_confirms += 1;
        if self.failed_confirms >= self.settings.max_failed_confirms {
            out.push(self.build_message(now, MessageBody::Alarm { akind: AlarmKind::Obstructed, sev: Severity::Info }));
            self.transition(OccupancyState::Vacant, OccupancyReason::None);
            out.push(self.build_report(&verdict, now));
        }
        self.next_poll_t = self.schedule_next(now);
    }

    fn occupied_poll(&mut self, now: u64, verdict: VisionVerdict, out: &mut Vec<TelemetryMessage>) {
        if !self.ir_triggered() && !verdict.vehicle_present {
            self.vacate_streak += 1;
            if self.vacate_streak >= self.settings.vacate_polls {
                self.transition(OccupancyState::Vacant, OccupancyReason::None);
                self.next_poll_t = self.schedule_next(now);
            }
        } else {
            self.vacate_streak = 0;
            if self.occ == OccupancyState::OccupiedCollision && verdict.vehicle_present {
                self.transition(OccupancyState::OccupiedVisual, OccupancyReason::VisualConfirmation);
            }
        }
        out.push(self.build_report(&verdict, now));
    }

    fn transition(&mut self, to: OccupancyState, reason: OccupancyReason) {
        if self.occ == OccupancyState::Sensing && to != OccupancyState::Sensing {
            self.failed_confirms = 0;
        }
        if !to.is_occupied() || !self.occ.is_occupied() {
            self.vacate_streak = 0;
        }
        self.occ = to;
        self.reason = reason;
    }

    fn emit_tilt_alarm(&mut self, now: u64, out: &mut Vec<TelemetryMessage>) {
        self.last_tilt_alarm_t = Some(now);
        out.push(self.build_message(now, MessageBody::Alarm { akind: AlarmKind::Tilt, sev: Severity::Critical }));
    }

    fn average_power(&self, now: u64) -> f64 {
        self.ledger.average_power(self.ledger.start(), now).unwrap_or_else(|_| self.ledger.model().standby_w())
    }

    fn build_message(&mut self, now: u64, body: MessageBody) -> TelemetryMessage {
        self.seq += 1;
        TelemetryMessage {
            sid: self.space_id.clone(),
            tid: self.terminal_id.clone(),
            seq: self.seq,
            ts: now,
            tilt: self.inertial.tilt_deg().unwrap_or(0.0),
            pwr: self.average_power(now),
            body,
        }
    }

    /// Report for the current state. Collision-fallback reports carry the
    /// verdict's confidence even though it is below threshold.
    pub fn build_report(&mut self, verdict: &VisionVerdict, now: u64) -> TelemetryMessage {
        let dist = self.last_reading.map_or(self.ir.calibration().max_range(), |r| r.smoothed);
        let conf = if self.occ.is_occupied() { verdict.best_confidence } else { 0.0 };
        let body = MessageBody::Report { occ: self.occ.is_occupied(), conf, rsn: self.reason, dist };
        self.build_message(now, body)
    }

    pub fn last_verdict(&self) -> VisionVerdict {
        self.last_verdict
    }

    /// Start time of the detection in flight, if any.
    pub fn detection_started(&self) -> Option<u64> {
        self.pending.map(|p| p.started)
    }
}
