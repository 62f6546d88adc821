//! Oracles and generators shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use parkbarrier::cloud::{
    parse_jsonl, AlarmAction, BusinessState, CloudConfig, CloudService, MemoryLog, SpaceRegistration,
};
use parkbarrier::detection::DetBox;
use parkbarrier::protocol::{decode, encode, AlarmKind, MessageBody, OccupancyReason, Severity, TelemetryMessage};
use parkbarrier::sim::Scenario;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn corpus(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(name);
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(name)
}

/// Bit-at-a-time CRC16-CCITT-FALSE, written from the polynomial definition.
pub fn crc16_bitwise(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        for i in (0..8).rev() {
            let bit = (byte >> i) & 1 == 1;
            let top = crc & 0x8000 != 0;
            crc <<= 1;
            if bit ^ top {
                crc ^= 0x1021;
            }
        }
    }
    crc
}

fn oracle_iou(a: &DetBox, b: &DetBox) -> f64 {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Brute force over all subsets: the greedy result is the unique subset in
/// which a box is kept exactly when no kept box ranked above it (higher
/// confidence, then lower index) of the same class overlaps it beyond the
/// threshold. Returned in rank order.
pub fn nms_oracle(boxes: &[DetBox], thr: f64) -> Vec<DetBox> {
    let n = boxes.len();
    let ranks_above = |i: usize, j: usize| {
        boxes[i].confidence > boxes[j].confidence || (boxes[i].confidence == boxes[j].confidence && i < j)
    };
    let mut solutions = Vec::new();
    for mask in 0u32..(1 << n) {
        let kept = |i: usize| mask & (1 << i) != 0;
        let consistent = (0..n).all(|j| {
            let suppressed = (0..n).any(|i| {
                i != j
                    && kept(i)
                    && ranks_above(i, j)
                    && boxes[i].class_id == boxes[j].class_id
                    && oracle_iou(&boxes[i], &boxes[j]) > thr
            });
            kept(j) == !suppressed
        });
        if consistent {
            solutions.push(mask);
        }
    }
    assert_eq!(solutions.len(), 1, "fixed point must be unique");
    let mut idx: Vec<usize> = (0..n).filter(|i| solutions[0] & (1 << i) != 0).collect();
    idx.sort_by(|&i, &j| if ranks_above(i, j) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
    idx.into_iter().map(|i| boxes[i]).collect()
}

/// Up to six boxes on a coarse grid so overlaps and confidence ties are common.
pub fn random_boxes(r: &mut ChaCha8Rng) -> Vec<DetBox> {
    let n = r.random_range(0..=6);
    (0..n)
        .map(|_| {
            let mut b = DetBox::new(
                r.random_range(0..12) as f64 * 5.0,
                r.random_range(0..12) as f64 * 5.0,
                r.random_range(1..8) as f64 * 5.0,
                r.random_range(1..8) as f64 * 5.0,
                r.random_range(1..=8) as f64 / 8.0,
            );
            b.class_id = r.random_range(0..2);
            b
        })
        .collect()
}

fn milli(r: &mut ChaCha8Rng, max_units: u64) -> f64 {
    r.random_range(0..=max_units * 1000) as f64 / 1000.0
}

const REASONS: [OccupancyReason; 4] = [
    OccupancyReason::None,
    OccupancyReason::InfraredOcclusion,
    OccupancyReason::VisualConfirmation,
    OccupancyReason::CollisionFallback,
];

/// A valid message whose numbers are already at wire precision.
pub fn random_message(r: &mut ChaCha8Rng) -> TelemetryMessage {
    let body = match r.random_range(0..3) {
        0 => MessageBody::Report {
            occ: r.random(),
            conf: milli(r, 1),
            rsn: *REASONS.choose(r).unwrap(),
            dist: milli(r, 400),
        },
        1 => MessageBody::Heartbeat,
        _ => MessageBody::Alarm {
            akind: *[AlarmKind::Tilt, AlarmKind::Obstructed, AlarmKind::Offline].choose(r).unwrap(),
            sev: *[Severity::Info, Severity::Warn, Severity::Critical].choose(r).unwrap(),
        },
    };
    let mut tilt = milli(r, 180);
    if tilt > 180.0 {
        tilt = 180.0;
    }
    TelemetryMessage {
        sid: format!("s{}", r.random_range(0..10_000)),
        tid: format!("t{}", r.random_range(0..10_000)),
        seq: r.random_range(0..u32::MAX as u64),
        ts: r.random_range(0..1u64 << 42),
        tilt,
        pwr: milli(r, 10),
        body,
    }
}

pub fn report(sid: &str, seq: u64, conf: f64, occ: bool, rsn: OccupancyReason) -> TelemetryMessage {
    TelemetryMessage {
        sid: sid.into(),
        tid: format!("t-{sid}"),
        seq,
        ts: seq * 1_000,
        tilt: 0.0,
        pwr: 0.92,
        body: MessageBody::Report { occ, conf, rsn, dist: if occ { 40.0 } else { 150.0 } },
    }
}

pub fn cloud_config(spaces: &[&str]) -> CloudConfig {
    CloudConfig {
        spaces: spaces
            .iter()
            .map(|s| SpaceRegistration { space_id: s.to_string(), terminal_id: format!("t-{s}") })
            .collect(),
        ..CloudConfig::default()
    }
}

/// One input to the service.
#[derive(Debug, Clone)]
pub enum Input {
    Message(TelemetryMessage),
    Sweep,
    Alarm(AlarmAction, usize),
}

/// A mixed stream over three spaces: occupancy runs with duplicates and
/// stale retransmissions, heartbeats with gaps long enough to go offline,
/// node alarms, sweeps and operator actions.
pub fn random_inputs(r: &mut ChaCha8Rng, len: usize) -> Vec<(u64, Input)> {
    let spaces = ["a", "b", "c"];
    let mut seq = [0u64; 3];
    let mut now = 0u64;
    let mut sent: Vec<TelemetryMessage> = Vec::new();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        now += r.random_range(0..40_000);
        let si = r.random_range(0..3);
        let sid = spaces[si];
        let input = match r.random_range(0..100) {
            0..=39 => {
                seq[si] += 1;
                let occ = r.random_bool(0.5);
                let rsn = if occ { *REASONS[1..].choose(r).unwrap() } else { OccupancyReason::None };
                Input::Message(report(sid, seq[si], milli(r, 1), occ, rsn))
            }
            40..=54 => match sent.choose(r) {
                Some(m) => Input::Message(m.clone()),
                None => Input::Sweep,
            },
            55..=69 => {
                seq[si] += 1;
                let mut m = report(sid, seq[si], 0.0, false, OccupancyReason::None);
                m.body = MessageBody::Heartbeat;
                Input::Message(m)
            }
            70..=76 => {
                seq[si] += 1;
                let mut m = report(sid, seq[si], 0.0, false, OccupancyReason::None);
                m.tilt = 30.0;
                m.body = MessageBody::Alarm { akind: AlarmKind::Tilt, sev: Severity::Critical };
                Input::Message(m)
            }
            77..=89 => Input::Sweep,
            _ => {
                let action = if r.random() { AlarmAction::Ack } else { AlarmAction::Resolve };
                Input::Alarm(action, r.random_range(1..6))
            }
        };
        if let Input::Message(m) = &input {
            sent.push(m.clone());
        }
        out.push((now, input));
    }
    out
}

pub fn apply(svc: &mut CloudService, now: u64, input: &Input) {
    match input {
        Input::Message(m) => {
            let _ = svc.submit(m, now);
        }
        Input::Sweep => {
            svc.sweep(now);
        }
        Input::Alarm(action, n) => {
            let _ = svc.alarm_transition(&format!("a{n:06}"), *action, "ops", now);
        }
    }
}

/// Run the inputs live with an in-memory log. Returns the log and the live
/// state after each log length (index k holds the state once k entries
/// were written).
pub fn live_run(inputs: &[(u64, Input)]) -> (MemoryLog, Vec<BusinessState>) {
    let log = MemoryLog::new();
    let mut svc = CloudService::new(cloud_config(&["a", "b", "c"])).with_log(Box::new(log.clone()));
    let mut states = vec![svc.state().clone()];
    for (now, input) in inputs {
        let before = svc.state().clone();
        apply(&mut svc, *now, input);
        let written = log.entries().len();
        if written + 1 > states.len() {
            assert_eq!(written, states.len(), "one input writes at most one entry");
            states.push(svc.state().clone());
        } else {
            assert_eq!(&before, svc.state(), "unlogged input changed state: {input:?}");
        }
    }
    (log, states)
}

pub fn run_embedded(sc: &Scenario, opts: &parkbarrier::sim::RunOptions) -> parkbarrier::sim::RunOutput {
    let mut cloud = parkbarrier::sim::EmbeddedCloud::new(CloudService::new(CloudConfig::default()));
    parkbarrier::sim::run(sc, opts, &mut cloud).expect("simulation runs")
}

pub fn recorded() -> parkbarrier::sim::RunOptions {
    parkbarrier::sim::RunOptions { record: true, ..Default::default() }
}

/// Pool of distinct reports for one space; each (seq, conf) key names
/// exactly one report, as a node never reuses a key for different content.
fn pool(sid: &str, r: &mut ChaCha8Rng) -> Vec<TelemetryMessage> {
    let mut out = Vec::new();
    for seq in 1..=4 {
        for conf in [0.3, 0.9] {
            let occ = r.random_bool(0.5);
            let rsn = if occ { OccupancyReason::VisualConfirmation } else { OccupancyReason::None };
            out.push(report(sid, seq, conf, occ, rsn));
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

type Converged = Vec<(bool, OccupancyReason, Option<(u64, f64)>, bool)>;

fn converged(svc: &CloudService) -> Converged {
    svc.state()
        .spaces
        .values()
        .map(|s| (s.business_occ, s.reason, s.last_key.map(|k| (k.seq, k.conf)), s.pending.is_some()))
        .collect()
}

/// Every ordering of each multiset, swept past the persistence window, ends
/// in the same state, led by the lexicographically largest report.
pub fn check_convergence(multisets: usize) {
    let mut r = rng(11);
    let perms: Vec<Vec<Vec<usize>>> = (0..=6).map(permutations).collect();
    for _ in 0..multisets {
        let a = pool("a", &mut r);
        let b = pool("b", &mut r);
        let n = r.random_range(1..=6);
        let set: Vec<TelemetryMessage> =
            (0..n).map(|_| if r.random() { a.choose(&mut r) } else { b.choose(&mut r) }.unwrap().clone()).collect();
        let mut reference = None;
        for p in &perms[n] {
            let mut svc = CloudService::new(cloud_config(&["a", "b"]));
            for (k, &i) in p.iter().enumerate() {
                svc.submit(&set[i], 1_000 * k as u64).unwrap();
            }
            svc.sweep(100_000);
            let got = converged(&svc);
            match &reference {
                None => reference = Some(got),
                Some(want) => assert_eq!(&got, want, "order {p:?} of {set:?}"),
            }
        }
        let want = reference.unwrap();
        for (rec, sid) in want.iter().zip(["a", "b"]) {
            let top = set.iter().filter(|m| m.sid == sid).max_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
            match top {
                None => assert_eq!(rec.2, None),
                Some(m) => {
                    let MessageBody::Report { occ, .. } = m.body else { unreachable!() };
                    assert_eq!(rec.0, occ, "lexicographic maximum dominates");
                    assert_eq!(rec.2, Some(key(m)));
                }
            }
        }
    }
}

fn key(m: &TelemetryMessage) -> (u64, f64) {
    let MessageBody::Report { conf, .. } = m.body else { unreachable!() };
    (m.seq, conf)
}

pub fn check_round_trip(n: usize) {
    let mut r = rng(1);
    for _ in 0..n {
        let msg = random_message(&mut r);
        let frame = encode(&msg).expect("fits the budget");
        let out = decode(&frame);
        assert!(out.errors.is_empty(), "{:?}", out.errors);
        assert_eq!(out.consumed, frame.len());
        assert_eq!(out.messages, vec![msg.clone()]);
        assert_eq!(encode(&out.messages[0]).unwrap(), frame);
    }
}

/// Flip every byte of every frame in turn; no mutated frame may decode.
pub fn check_mutations(frames: usize) {
    let mut r = rng(2);
    let corpus: Vec<Vec<u8>> = (0..frames).map(|_| encode(&random_message(&mut r)).unwrap()).collect();
    for frame in &corpus {
        for pos in 0..frame.len() {
            let mut bad = frame.clone();
            bad[pos] ^= r.random_range(1..=255u8);
            assert!(decode(&bad).messages.is_empty(), "mutation at byte {pos} accepted");
        }
    }
}

pub fn check_double_replay(len: usize) {
    let inputs = random_inputs(&mut rng(5), len);
    let (log, states) = live_run(&inputs);
    let entries = log.entries();
    assert!(entries.len() > len / 4, "stream exercises the log: {}", entries.len());
    let live = states.last().unwrap();
    let once = CloudService::recover(cloud_config(&["a", "b", "c"]), &entries, None);
    assert_eq!(once.state(), live);
    let mut twice = CloudService::recover(cloud_config(&["a", "b", "c"]), &entries, None);
    for e in &entries {
        twice.replay(e);
    }
    assert_eq!(twice.state(), live);
    once.check_invariants().unwrap();
}

/// Cut the serialized log at random byte offsets, torn last lines included.
pub fn check_truncations(len: usize, cuts: usize) {
    let inputs = random_inputs(&mut rng(9), len);
    let (log, states) = live_run(&inputs);
    let text = log.to_jsonl();
    let mut r = rng(10);
    for _ in 0..cuts {
        let cut = r.random_range(0..=text.len());
        let prefix = &text[..cut];
        let entries = parse_jsonl(prefix, "mem".as_ref()).unwrap();
        let full_lines = prefix.matches('\n').count();
        assert_eq!(entries.len(), full_lines);
        let svc = CloudService::recover(cloud_config(&["a", "b", "c"]), &entries, None);
        assert_eq!(svc.state(), &states[full_lines], "cut at byte {cut}");
    }
}
