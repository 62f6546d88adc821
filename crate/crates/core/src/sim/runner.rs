//! Discrete-event loop over simulated time.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::NodeConfig;
use crate::detection::{Light, Scene, SpaceRoi, SyntheticDetector};
use crate::error::ConfigError;
use crate::fusion::{FusionMode, SensorFrame, SpaceNode};
use crate::inertial::AccelSample;
use crate::power::savings_vs_always_on;
use crate::protocol::transport::{pipe, FrameSink, PipeReceiver, PipeSender};
use crate::protocol::{FrameCodec, MessageBody, TelemetryMessage};

use super::endpoint::{CloudEndpoint, EndpointError};
use super::gateway::Gateway;
use super::metrics::{CloudTotals, Confusion, MessageCounters, MetricsReport, SpaceMetrics};
use super::scenario::{EventKind, Scenario, ScenarioEvent};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cloud: {0}")]
    Cloud(#[from] EndpointError),
}

/// Ground-truth to sensor mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// IR frame cadence while the distance is changing.
    pub ir_tick_ms: u64,
    pub ramp_ms: u64,
    pub empty_cm: f64,
    pub vehicle_cm: f64,
    pub pedestrian_cm: f64,
    pub pedestrian_ms: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            ir_tick_ms: 100,
            ramp_ms: 3_000,
            empty_cm: 150.0,
            vehicle_cm: 40.0,
            pedestrian_cm: 60.0,
            pedestrian_ms: 1_500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
    /// Replaces every space's mode.
    pub mode: Option<FusionMode>,
    pub node: NodeConfig,
    pub sensors: SensorModel,
    pub sweep_interval_ms: u64,
    pub sample_interval_ms: u64,
    /// Keep emitted messages and per-space step and detection times.
    pub record: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: None,
            mode: None,
            node: NodeConfig::default(),
            sensors: SensorModel::default(),
            sweep_interval_ms: 5_000,
            sample_interval_ms: 1_000,
            record: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub messages: Vec<TelemetryMessage>,
    pub steps: Vec<Vec<u64>>,
    pub detections: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Trace,
}

/// Linear distance change between two times.
#[derive(Debug, Clone, Copy)]
struct Ramp {
    t0: u64,
    t1: u64,
    d0: f64,
    d1: f64,
}

impl Ramp {
    fn at(&self, t: u64) -> f64 {
        if t >= self.t1 {
            self.d1
        } else if t <= self.t0 {
            self.d0
        } else {
            self.d0 + (self.d1 - self.d0) * (t - self.t0) as f64 / (self.t1 - self.t0) as f64
        }
    }
}

struct SpaceSim {
    node: SpaceNode,
    events: VecDeque<ScenarioEvent>,
    vehicle: bool,
    light: Light,
    occluded: bool,
    tilt_deg: f64,
    impact_g: Option<f64>,
    link_loss: f64,
    ramp: Ramp,
    dips: Vec<(u64, u64)>,
    link_rng: ChaCha8Rng,
    confusion: Confusion,
    sent: u64,
    dropped: u64,
    unencodable: u64,
    alarms_sent: u64,
}

impl SpaceSim {
    fn distance(&self, t: u64, sensors: &SensorModel) -> f64 {
        let mut d = self.ramp.at(t);
        if self.dips.iter().any(|&(a, b)| a <= t && t < b) {
            d = d.min(sensors.pedestrian_cm);
        }
        d
    }

    fn apply_events(&mut self, t: u64, sensors: &SensorModel) {
        while self.events.front().is_some_and(|e| e.t <= t) {
            let e = self.events.pop_front().expect("nonempty");
            match e.kind {
                EventKind::VehicleArrive | EventKind::VehicleDepart => {
                    let arrive = e.kind == EventKind::VehicleArrive;
                    let target = if arrive { sensors.vehicle_cm } else { sensors.empty_cm };
                    self.ramp = Ramp { t0: e.t, t1: e.t + sensors.ramp_ms, d0: self.ramp.at(e.t), d1: target };
                    self.vehicle = arrive;
                }
                EventKind::Pedestrian => self.dips.push((e.t, e.t + sensors.pedestrian_ms)),
                EventKind::Impact { g } => self.impact_g = Some(self.impact_g.map_or(g, |x| x.max(g))),
                EventKind::Tilt { deg } => self.tilt_deg = deg,
                EventKind::Light(l) => self.light = l,
                EventKind::LinkLoss { p } => self.link_loss = p,
                EventKind::Occlusion(on) => self.occluded = on,
            }
        }
        self.dips.retain(|&(_, end)| end > t);
    }

    /// Next time the environment needs a frame, strictly after `now`.
    fn next_env_time(&self, now: u64, sensors: &SensorModel) -> Option<u64> {
        let changing = now < self.ramp.t1 || !self.dips.is_empty();
        let tick = changing.then(|| now + sensors.ir_tick_ms.max(1));
        let event = self.events.front().map(|e| e.t.max(now + 1));
        match (tick, event) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn frame(&mut self, t: u64, sensors: &SensorModel) -> SensorFrame {
        let voltage = self.node.ir().calibration().distance_to_voltage(self.distance(t, sensors));
        let mag = 1.0 + self.impact_g.take().unwrap_or(0.0);
        let theta = self.tilt_deg.to_radians();
        SensorFrame {
            t,
            ir_voltage: voltage,
            accel: AccelSample::new(mag * theta.sin(), 0.0, mag * theta.cos(), t),
            scene: Scene { vehicle_present: self.vehicle, light: self.light, occluded: self.occluded },
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream seed per (space, purpose).
pub fn derive_seed(seed: u64, space: usize, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64((space as u64) << 8 | stream))
}

const STREAM_DETECTOR: u64 = 1;
const STREAM_LINK: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Job {
    Space(usize),
    Sweep,
    Sample,
}

pub struct Simulation<'a> {
    scenario: &'a Scenario,
    opts: &'a RunOptions,
    seed: u64,
    spaces: Vec<SpaceSim>,
    codec: FrameCodec,
    tx: PipeSender,
    rx: PipeReceiver,
    gateway: Gateway,
    trace: Trace,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, opts: &'a RunOptions) -> Result<Self, SimError> {
        let seed = opts.seed.unwrap_or(scenario.seed);
        let mut spaces = Vec::with_capacity(scenario.spaces.len());
        for (i, spec) in scenario.spaces.iter().enumerate() {
            let mut cfg = opts.node.clone();
            cfg.fusion.mode = opts.mode.unwrap_or(spec.mode);
            scenario.detector.apply(&mut cfg.detector);
            let [x, y, w, h] = spec.roi;
            let roi = SpaceRoi::new(x, y, w, h, cfg.detector.input_size)?;
            let detector = SyntheticDetector::new(cfg.detector.clone(), derive_seed(seed, i, STREAM_DETECTOR));
            let node = SpaceNode::new(&cfg, spec.id.clone(), spec.terminal_id.clone(), roi, Box::new(detector), 0)?;
            let empty = opts.sensors.empty_cm;
            spaces.push(SpaceSim {
                node,
                events: scenario.events.iter().filter(|e| e.space_id == spec.id).cloned().collect(),
                vehicle: false,
                light: Light::Day,
                occluded: false,
                tilt_deg: 0.0,
                impact_g: None,
                link_loss: 0.0,
                ramp: Ramp { t0: 0, t1: 0, d0: empty, d1: empty },
                dips: Vec::new(),
                link_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, i, STREAM_LINK)),
                confusion: Confusion::default(),
                sent: 0,
                dropped: 0,
                unencodable: 0,
                alarms_sent: 0,
            });
        }
        let (tx, rx) = pipe();
        let codec = FrameCodec { max_payload: opts.node.max_payload };
        let n = spaces.len();
        let trace = if opts.record {
            Trace { messages: Vec::new(), steps: vec![Vec::new(); n], detections: vec![Vec::new(); n] }
        } else {
            Trace::default()
        };
        Ok(Simulation { scenario, opts, seed, spaces, codec, tx, rx, gateway: Gateway::new(codec), trace })
    }

    pub fn run(mut self, cloud: &mut dyn CloudEndpoint) -> Result<RunOutput, SimError> {
        for s in &self.scenario.spaces {
            cloud.register(&s.id, &s.terminal_id)?;
        }
        let duration = self.scenario.duration_ms;
        let mut queue: BinaryHeap<Reverse<(u64, Job)>> = BinaryHeap::new();
        for i in 0..self.spaces.len() {
            queue.push(Reverse((0, Job::Space(i))));
        }
        queue.push(Reverse((0, Job::Sweep)));
        queue.push(Reverse((0, Job::Sample)));

        while let Some(Reverse((t, job))) = queue.pop() {
            if t >= duration {
                break;
            }
            match job {
                Job::Space(i) => {
                    let next = self.step_space(i, t, cloud)?;
                    queue.push(Reverse((next, Job::Space(i))));
                }
                Job::Sweep => {
                    cloud.sweep(t)?;
                    queue.push(Reverse((t + self.opts.sweep_interval_ms.max(1), Job::Sweep)));
                }
                Job::Sample => {
                    for s in &mut self.spaces {
                        s.confusion.record(s.vehicle, s.node.state().is_occupied());
                    }
                    queue.push(Reverse((t + self.opts.sample_interval_ms.max(1), Job::Sample)));
                }
            }
        }
        cloud.sweep(duration)?;
        self.finish(cloud)
    }

    fn step_space(&mut self, i: usize, t: u64, cloud: &mut dyn CloudEndpoint) -> Result<u64, SimError> {
        let sensors = self.opts.sensors;
        let s = &mut self.spaces[i];
        s.apply_events(t, &sensors);
        let frame = s.frame(t, &sensors);
        let before = s.node.stats().detector_invocations;
        let msgs = s.node.step(t, &frame);
        if self.opts.record {
            self.trace.steps[i].push(t);
            if s.node.stats().detector_invocations > before {
                self.trace.detections[i].push(t);
            }
        }
        for msg in msgs {
            s.sent += 1;
            if matches!(msg.body, MessageBody::Alarm { .. }) {
                s.alarms_sent += 1;
            }
            let lost = s.link_rng.random::<f64>() < s.link_loss;
            match self.codec.encode(&msg) {
                Err(e) => {
                    log::warn!("{}: cannot encode seq {}: {e}", msg.sid, msg.seq);
                    s.unencodable += 1;
                }
                Ok(_) if lost => s.dropped += 1,
                Ok(frame) => {
                    self.tx.send_frame(&frame).expect("receiver lives as long as the simulation");
                }
            }
            if self.opts.record {
                self.trace.messages.push(msg);
            }
        }
        let bytes = self.rx.drain();
        if !bytes.is_empty() {
            self.gateway.bridge(&bytes, cloud, t);
            if let Some(e) = self.gateway.last_error() {
                return Err(SimError::Cloud(EndpointError::Transport(format!(
                    "delivery failed at t={t} ms after retry: {e}"
                ))));
            }
        }
        let s = &self.spaces[i];
        let mut next = s.node.next_wakeup().max(t + 1);
        if let Some(env) = s.next_env_time(t, &sensors) {
            next = next.min(env);
        }
        Ok(next)
    }

    fn finish(mut self, cloud: &mut dyn CloudEndpoint) -> Result<RunOutput, SimError> {
        let duration = self.scenario.duration_ms;
        let snapshot = cloud.snapshot()?;
        let model = self.opts.node.power;
        let mut per_space = Vec::with_capacity(self.spaces.len());
        let mut confusion = Confusion::default();
        let mut sent = 0;
        let mut dropped = 0;
        let mut unencodable = 0;
        let mut power_sum = 0.0;
        for (spec, s) in self.scenario.spaces.iter().zip(&mut self.spaces) {
            s.node.advance_ledger(duration);
            let ledger = s.node.ledger();
            let avg = ledger.average_power(0, duration).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let active = ledger.active_ms(0, duration);
            let stats = s.node.stats();
            confusion.add(&s.confusion);
            sent += s.sent;
            dropped += s.dropped;
            unencodable += s.unencodable;
            power_sum += avg;
            per_space.push(SpaceMetrics {
                space_id: spec.id.clone(),
                mode: s.node.settings().mode,
                final_state: s.node.state(),
                final_reason: s.node.reason(),
                business_occ: snapshot.spaces.iter().any(|b| b.id == spec.id && b.occ),
                confusion: s.confusion,
                steps: stats.steps,
                ir_samples: stats.ir_samples,
                detector_invocations: stats.detector_invocations,
                detector_active_ms: active,
                detector_duty: active as f64 / duration as f64,
                average_power_w: avg,
                savings_vs_always_on: savings_vs_always_on(avg, &model).unwrap_or(0.0),
                messages_sent: s.sent,
                messages_dropped: s.dropped,
                alarms_sent: s.alarms_sent,
            });
        }
        let g = self.gateway.stats();
        let average_power_w = power_sum / self.spaces.len() as f64;
        let report = MetricsReport {
            seed: self.seed,
            duration_ms: duration,
            spaces: per_space,
            confusion,
            latency: snapshot.metrics.flip_latency,
            average_power_w,
            savings_vs_always_on: savings_vs_always_on(average_power_w, &model).unwrap_or(0.0),
            messages: MessageCounters {
                sent,
                dropped,
                corrupt: g.corrupt,
                duplicate: g.duplicates,
                applied: g.applied,
                rejected: g.rejected + unencodable,
                retries: g.retries,
                transport_failures: g.transport_failures,
            },
            cloud: CloudTotals {
                occupied_spaces: snapshot.metrics.occupied,
                orders_opened: snapshot.orders.len(),
                orders_closed: snapshot.orders.iter().filter(|o| !o.is_open()).count(),
                revenue: snapshot.metrics.revenue,
                open_alarms: snapshot.metrics.open_alarms,
            },
        };
        Ok(RunOutput { report, trace: self.trace })
    }
}

pub fn run(scenario: &Scenario, opts: &RunOptions, cloud: &mut dyn CloudEndpoint) -> Result<RunOutput, SimError> {
    Simulation::new(scenario, opts)?.run(cloud)
}
