use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocol::{AlarmKind, MessageBody, OccupancyReason, Severity, TelemetryMessage};

use super::config::CloudConfig;
use super::eventlog::{EventLog, LogEntry};
use super::model::{
    Alarm, AlarmAction, AlarmState, BusinessSpaceRecord, CloudAlarmKind, NodeHealth, NodeStatus, Order, OrderingKey,
    PendingOccupancy,
};
use super::CloudError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    OrderOpened { order_id: String, space_id: String },
    OrderClosed { order_id: String, space_id: String, fee: f64 },
    AlarmRaised { alarm_id: String, space_id: String, kind: CloudAlarmKind },
    AlarmCleared { alarm_id: String, space_id: String, kind: CloudAlarmKind },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub applied: bool,
    pub effects: Vec<Effect>,
}

/// Everything the log rebuilds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BusinessState {
    pub spaces: BTreeMap<String, BusinessSpaceRecord>,
    pub nodes: BTreeMap<String, NodeHealth>,
    pub orders: BTreeMap<String, Order>,
    pub alarms: BTreeMap<String, Alarm>,
    pub next_order: u64,
    pub next_alarm: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub reports_received: u64,
    pub reports_applied: u64,
    pub duplicates: u64,
    pub rejected: u64,
    pub heartbeats: u64,
    pub alarm_messages: u64,
    pub sweeps: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ms: f64,
    pub p50_ms: u64,
    pub p95_ms: u64,
    pub max_ms: u64,
}

impl LatencyStats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        let mut v = samples.to_vec();
        v.sort_unstable();
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        LatencyStats {
            count: v.len() as u64,
            mean_ms: v.iter().sum::<u64>() as f64 / v.len() as f64,
            p50_ms: rank(0.50),
            p95_ms: rank(0.95),
            max_ms: *v.last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub id: String,
    pub terminal_id: String,
    pub occ: bool,
    pub reason: OccupancyReason,
    pub last_ts: Option<u64>,
    pub alarm_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDetail {
    pub record: BusinessSpaceRecord,
    pub open_order: Option<Order>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudMetrics {
    pub spaces: usize,
    pub occupied: usize,
    pub occupancy_rate: f64,
    pub open_alarms: usize,
    pub average_reported_power_w: Option<f64>,
    pub orders_open: usize,
    pub orders_closed: usize,
    pub revenue: f64,
    pub counters: Counters,
    pub flip_latency: LatencyStats,
}

pub struct CloudService {
    config: CloudConfig,
    state: BusinessState,
    counters: Counters,
    flip_latencies: Vec<u64>,
    log: Option<Box<dyn EventLog>>,
}

impl std::fmt::Debug for CloudService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CloudService").field("state", &self.state).field("counters", &self.counters).finish()
    }
}

impl CloudService {
    pub fn new(config: CloudConfig) -> Self {
        let mut svc = CloudService {
            config,
            state: BusinessState::default(),
            counters: Counters::default(),
            flip_latencies: Vec::new(),
            log: None,
        };
        for r in svc.config.spaces.clone() {
            svc.register_space(&r.space_id, &r.terminal_id);
        }
        svc
    }

    /// Rebuild from `entries`, then append new inputs to `log`.
    pub fn recover(config: CloudConfig, entries: &[LogEntry], log: Option<Box<dyn EventLog>>) -> Self {
        let mut svc = CloudService::new(config);
        for e in entries {
            svc.replay(e);
        }
        svc.counters = Counters::default();
        svc.flip_latencies.clear();
        svc.log = log;
        svc
    }

    pub fn with_log(mut self, log: Box<dyn EventLog>) -> Self {
        self.log = Some(log);
        self
    }

    /// Apply one log entry. Entries that fail now also failed originally
    /// or are no-ops, so errors are ignored.
    pub fn replay(&mut self, entry: &LogEntry) {
        let result = match entry {
            LogEntry::Message { now, msg } => self.submit(msg, *now).map(|_| ()),
            LogEntry::Sweep { now } => {
                self.sweep(*now);
                Ok(())
            }
            LogEntry::Alarm { now, id, action, operator } => {
                self.alarm_transition(id, *action, operator, *now).map(|_| ())
            }
        };
        if let Err(e) = result {
            log::debug!("replay skipped entry: {e}");
        }
    }

    pub fn config(&self) -> &CloudConfig {
        &self.config
    }

    pub fn state(&self) -> &BusinessState {
        &self.state
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn count_rejected(&mut self) {
        self.counters.rejected += 1;
    }

    pub fn flip_latencies(&self) -> &[u64] {
        &self.flip_latencies
    }

    /// Returns false if the space already exists.
    pub fn register_space(&mut self, space_id: &str, terminal_id: &str) -> bool {
        if self.state.spaces.contains_key(space_id) {
            return false;
        }
        self.state.spaces.insert(space_id.to_string(), BusinessSpaceRecord::new(space_id, terminal_id));
        true
    }

    fn append(&mut self, entry: LogEntry) -> Result<(), CloudError> {
        if let Some(log) = self.log.as_mut() {
            log.append(&entry).map_err(|e| CloudError::Log(e.to_string()))?;
        }
        Ok(())
    }

    fn check_space(&self, msg: &TelemetryMessage) -> Result<(), CloudError> {
        let rec = self.state.spaces.get(&msg.sid).ok_or_else(|| CloudError::UnknownSpace(msg.sid.clone()))?;
        if rec.terminal_id != msg.tid {
            return Err(CloudError::TerminalMismatch {
                space: msg.sid.clone(),
                expected: rec.terminal_id.clone(),
                got: msg.tid.clone(),
            });
        }
        Ok(())
    }

    /// Dispatch any message type. `now` is the service receive time.
    pub fn submit(&mut self, msg: &TelemetryMessage, now: u64) -> Result<Outcome, CloudError> {
        if let Err(e) = msg.validate() {
            self.counters.rejected += 1;
            return Err(e.into());
        }
        let msg = msg.quantized();
        let result = match msg.body {
            MessageBody::Report { .. } => self.apply_report(&msg, now),
            MessageBody::Heartbeat => self.heartbeat(&msg, now),
            MessageBody::Alarm { .. } => self.apply_alarm_message(&msg, now),
        };
        match &result {
            Ok(o) if o.applied => self.append(LogEntry::Message { now, msg })?,
            Ok(_) => {}
            Err(_) => self.counters.rejected += 1,
        }
        result
    }

    fn apply_report(&mut self, msg: &TelemetryMessage, now: u64) -> Result<Outcome, CloudError> {
        let MessageBody::Report { occ, conf, rsn, dist } = msg.body else {
            return Err(CloudError::WrongType { expected: "report", got: msg.type_name() });
        };
        self.check_space(msg)?;
        self.counters.reports_received += 1;
        let key = OrderingKey { seq: msg.seq, conf };
        let window = self.config.persistence_window_ms;
        let needed = self.config.persistence_reports;
        let rec = self.state.spaces.get_mut(&msg.sid).expect("checked");
        if rec.last_key.is_some_and(|last| key.cmp_key(&last) != Ordering::Greater) {
            self.counters.duplicates += 1;
            return Ok(Outcome::default());
        }
        self.counters.reports_applied += 1;
        rec.last_key = Some(key);
        rec.last_ts = Some(msg.ts);
        rec.last_pwr = Some(msg.pwr);
        rec.last_dist = Some(dist);
        rec.last_tilt = Some(msg.tilt);

        let mut out = Outcome { applied: true, effects: Vec::new() };
        if occ == rec.business_occ {
            rec.pending = None;
            if occ && rsn != rec.reason {
                rec.reason = rsn;
                rec.reason_since = Some(now);
                if rsn != OccupancyReason::CollisionFallback {
                    rec.illegal_flagged = false;
                    let sid = msg.sid.clone();
                    self.clear_alarms(&sid, CloudAlarmKind::IllegalParking, now, &mut out.effects);
                }
            }
            return Ok(out);
        }
        let pending = match rec.pending {
            Some(p) if p.occ == occ => {
                PendingOccupancy { reason: rsn, consistent_reports: p.consistent_reports + 1, ..p }
            }
            _ => PendingOccupancy { occ, reason: rsn, first_seen_ts: now, consistent_reports: 1 },
        };
        rec.pending = Some(pending);
        if pending.consistent_reports >= needed || now.saturating_sub(pending.first_seen_ts) >= window {
            let sid = msg.sid.clone();
            self.flip(&sid, now, &mut out.effects);
        }
        Ok(out)
    }

    fn flip(&mut self, sid: &str, now: u64, effects: &mut Vec<Effect>) {
        let rate = self.config.rate_per_minute;
        let rec = self.state.spaces.get_mut(sid).expect("known space");
        let Some(p) = rec.pending.take() else { return };
        self.flip_latencies.push(now.saturating_sub(p.first_seen_ts));
        rec.business_occ = p.occ;
        rec.reason = if p.occ { p.reason } else { OccupancyReason::None };
        rec.reason_since = Some(now);
        rec.illegal_flagged = false;
        if p.occ {
            self.state.next_order += 1;
            let id = format!("o{:06}", self.state.next_order);
            rec.open_order = Some(id.clone());
            self.state.orders.insert(id.clone(), Order::open(id.clone(), sid.to_string(), now, rate));
            effects.push(Effect::OrderOpened { order_id: id, space_id: sid.to_string() });
        } else {
            if let Some(id) = rec.open_order.take() {
                let order = self.state.orders.get_mut(&id).expect("open order exists");
                if let Ok(fee) = order.close(now) {
                    effects.push(Effect::OrderClosed { order_id: id, space_id: sid.to_string(), fee });
                }
            }
            self.clear_alarms(sid, CloudAlarmKind::IllegalParking, now, effects);
        }
    }

    fn active_alarm(&self, sid: &str, kind: CloudAlarmKind) -> Option<&str> {
        let rec = self.state.spaces.get(sid)?;
        rec.active_alarms.iter().find(|id| self.state.alarms[*id].kind == kind).map(String::as_str)
    }

    fn raise_alarm(
        &mut self,
        sid: &str,
        kind: CloudAlarmKind,
        severity: Severity,
        now: u64,
        effects: &mut Vec<Effect>,
    ) {
        if self.active_alarm(sid, kind).is_some() {
            return;
        }
        self.state.next_alarm += 1;
        let id = format!("a{:06}", self.state.next_alarm);
        let alarm = Alarm {
            id: id.clone(),
            space_id: sid.to_string(),
            kind,
            severity,
            raised_ts: now,
            state: AlarmState::Open,
            ack_by: None,
            resolved_by: None,
            resolved_ts: None,
        };
        self.state.alarms.insert(id.clone(), alarm);
        if let Some(rec) = self.state.spaces.get_mut(sid) {
            rec.active_alarms.insert(id.clone());
        }
        effects.push(Effect::AlarmRaised { alarm_id: id, space_id: sid.to_string(), kind });
    }

    fn clear_alarms(&mut self, sid: &str, kind: CloudAlarmKind, now: u64, effects: &mut Vec<Effect>) {
        while let Some(id) = self.active_alarm(sid, kind).map(str::to_string) {
            self.state.alarms.get_mut(&id).expect("alarm exists").resolve(None, now);
            self.state.spaces.get_mut(sid).expect("space exists").active_alarms.remove(&id);
            effects.push(Effect::AlarmCleared { alarm_id: id, space_id: sid.to_string(), kind });
        }
    }

    fn heartbeat(&mut self, msg: &TelemetryMessage, now: u64) -> Result<Outcome, CloudError> {
        if !matches!(msg.body, MessageBody::Heartbeat) {
            return Err(CloudError::WrongType { expected: "heartbeat", got: msg.type_name() });
        }
        if !self.state.spaces.contains_key(&msg.sid) && self.config.register_on_heartbeat {
            self.register_space(&msg.sid, &msg.tid);
        }
        self.check_space(msg)?;
        self.counters.heartbeats += 1;
        let node = self.state.nodes.entry(msg.tid.clone()).or_insert_with(|| NodeHealth {
            terminal_id: msg.tid.clone(),
            space_id: msg.sid.clone(),
            last_seen_ts: now,
            status: NodeStatus::Online,
            missed: 0,
            last_seq: 0,
        });
        if msg.seq <= node.last_seq {
            self.counters.duplicates += 1;
            return Ok(Outcome::default());
        }
        node.last_seq = msg.seq;
        node.last_seen_ts = node.last_seen_ts.max(now);
        node.missed = 0;
        let was_offline = node.status == NodeStatus::Offline;
        node.status = NodeStatus::Online;
        let rec = self.state.spaces.get_mut(&msg.sid).expect("checked");
        rec.last_pwr = Some(msg.pwr);
        rec.last_tilt = Some(msg.tilt);
        let mut out = Outcome { applied: true, effects: Vec::new() };
        if was_offline {
            self.clear_alarms(&msg.sid, CloudAlarmKind::Offline, now, &mut out.effects);
        }
        Ok(out)
    }

    fn apply_alarm_message(&mut self, msg: &TelemetryMessage, now: u64) -> Result<Outcome, CloudError> {
        let MessageBody::Alarm { akind, sev } = msg.body else {
            return Err(CloudError::WrongType { expected: "alarm", got: msg.type_name() });
        };
        self.check_space(msg)?;
        self.counters.alarm_messages += 1;
        let rec = self.state.spaces.get_mut(&msg.sid).expect("checked");
        if msg.seq <= rec.last_alarm_seq {
            self.counters.duplicates += 1;
            return Ok(Outcome::default());
        }
        rec.last_alarm_seq = msg.seq;
        rec.last_tilt = Some(msg.tilt);
        let kind = match akind {
            AlarmKind::Tilt => CloudAlarmKind::Tilt,
            AlarmKind::Obstructed => CloudAlarmKind::Obstructed,
            AlarmKind::Offline => CloudAlarmKind::Offline,
        };
        let mut out = Outcome { applied: true, effects: Vec::new() };
        self.raise_alarm(&msg.sid, kind, sev, now, &mut out.effects);
        Ok(out)
    }

    /// Health, persistence-window and illegal-parking checks.
    pub fn sweep(&mut self, now: u64) -> Vec<Effect> {
        self.counters.sweeps += 1;
        let mut effects = Vec::new();
        let mut changed = false;
        let interval = self.config.heartbeat_interval_ms;
        let threshold = self.config.offline_after_missed;

        let mut went_offline = Vec::new();
        for node in self.state.nodes.values_mut() {
            if now < node.last_seen_ts {
                continue;
            }
            let missed = (now - node.last_seen_ts) / interval;
            if missed > node.missed {
                node.missed = missed;
                changed = true;
            }
            if node.missed >= threshold && node.status == NodeStatus::Online {
                node.status = NodeStatus::Offline;
                went_offline.push(node.space_id.clone());
            }
        }
        for sid in went_offline {
            self.raise_alarm(&sid, CloudAlarmKind::Offline, Severity::Warn, now, &mut effects);
        }

        let window = self.config.persistence_window_ms;
        let due: Vec<String> = self
            .state
            .spaces
            .values()
            .filter(|r| r.pending.is_some_and(|p| now.saturating_sub(p.first_seen_ts) >= window))
            .map(|r| r.space_id.clone())
            .collect();
        for sid in due {
            self.flip(&sid, now, &mut effects);
        }

        let grace = self.config.illegal_parking_grace_ms;
        let illegal: Vec<String> = self
            .state
            .spaces
            .values()
            .filter(|r| {
                r.business_occ
                    && r.reason == OccupancyReason::CollisionFallback
                    && !r.illegal_flagged
                    && r.reason_since.is_some_and(|s| now.saturating_sub(s) > grace)
            })
            .map(|r| r.space_id.clone())
            .collect();
        for sid in illegal {
            self.state.spaces.get_mut(&sid).expect("space exists").illegal_flagged = true;
            self.raise_alarm(&sid, CloudAlarmKind::IllegalParking, Severity::Warn, now, &mut effects);
            changed = true;
        }

        if changed || !effects.is_empty() {
            if let Err(e) = self.append(LogEntry::Sweep { now }) {
                log::error!("{e}");
            }
        }
        effects
    }

    pub fn alarm_transition(
        &mut self,
        id: &str,
        action: AlarmAction,
        operator: &str,
        now: u64,
    ) -> Result<Alarm, CloudError> {
        let alarm = self.state.alarms.get_mut(id).ok_or_else(|| CloudError::UnknownAlarm(id.to_string()))?;
        alarm.transition(action, operator, now)?;
        let alarm = alarm.clone();
        if alarm.state == AlarmState::Resolved {
            if let Some(rec) = self.state.spaces.get_mut(&alarm.space_id) {
                rec.active_alarms.remove(id);
            }
        }
        self.append(LogEntry::Alarm { now, id: id.to_string(), action, operator: operator.to_string() })?;
        Ok(alarm)
    }

    pub fn space_summaries(&self) -> Vec<SpaceSummary> {
        self.state
            .spaces
            .values()
            .map(|r| SpaceSummary {
                id: r.space_id.clone(),
                terminal_id: r.terminal_id.clone(),
                occ: r.business_occ,
                reason: r.reason,
                last_ts: r.last_ts,
                alarm_count: r.active_alarms.len(),
            })
            .collect()
    }

    pub fn space_detail(&self, id: &str) -> Option<SpaceDetail> {
        let record = self.state.spaces.get(id)?.clone();
        let open_order = record.open_order.as_ref().and_then(|o| self.state.orders.get(o)).cloned();
        Some(SpaceDetail { record, open_order })
    }

    pub fn alarms(&self, state: Option<AlarmState>) -> Vec<Alarm> {
        self.state.alarms.values().filter(|a| state.is_none_or(|s| a.state == s)).cloned().collect()
    }

    pub fn orders(&self, space: Option<&str>) -> Vec<Order> {
        self.state.orders.values().filter(|o| space.is_none_or(|s| o.space_id == s)).cloned().collect()
    }

    pub fn nodes(&self) -> Vec<NodeHealth> {
        self.state.nodes.values().cloned().collect()
    }

    pub fn metrics(&self) -> CloudMetrics {
        let spaces = self.state.spaces.len();
        let occupied = self.state.spaces.values().filter(|r| r.business_occ).count();
        let powers: Vec<f64> = self.state.spaces.values().filter_map(|r| r.last_pwr).collect();
        let revenue = self.state.orders.values().filter_map(|o| o.fee).fold(0.0, |a, b| a + b);
        CloudMetrics {
            spaces,
            occupied,
            occupancy_rate: if spaces == 0 { 0.0 } else { occupied as f64 / spaces as f64 },
            open_alarms: self.state.alarms.values().filter(|a| a.is_active()).count(),
            average_reported_power_w: if powers.is_empty() {
                None
            } else {
                Some(powers.iter().sum::<f64>() / powers.len() as f64)
            },
            orders_open: self.state.orders.values().filter(|o| o.is_open()).count(),
            orders_closed: self.state.orders.values().filter(|o| !o.is_open()).count(),
            revenue: (revenue * 100.0).round() / 100.0,
            counters: self.counters,
            flip_latency: LatencyStats::from_samples(&self.flip_latencies),
        }
    }

    /// Structural invariants; used by tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        for r in self.state.spaces.values() {
            if r.business_occ != r.open_order.is_some() {
                return Err(format!("{}: open_order/business_occ mismatch", r.space_id));
            }
            if let Some(o) = &r.open_order {
                if !self.state.orders.get(o).is_some_and(Order::is_open) {
                    return Err(format!("{}: open_order {o} is not open", r.space_id));
                }
            }
            for a in &r.active_alarms {
                if !self.state.alarms.get(a).is_some_and(Alarm::is_active) {
                    return Err(format!("{}: alarm {a} listed active but is not", r.space_id));
                }
            }
        }
        for n in self.state.nodes.values() {
            if (n.status == NodeStatus::Offline) != (n.missed >= self.config.offline_after_missed) {
                return Err(format!("{}: status/missed mismatch", n.terminal_id));
            }
        }
        for o in self.state.orders.values() {
            if o.close_ts.is_some_and(|c| c < o.open_ts) {
                return Err(format!("{}: closed before opened", o.id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::config::SpaceRegistration;
    use crate::cloud::eventlog::MemoryLog;

    fn cfg() -> CloudConfig {
        CloudConfig {
            spaces: vec![SpaceRegistration { space_id: "s1".into(), terminal_id: "t1".into() }],
            ..CloudConfig::default()
        }
    }

    fn report(seq: u64, occ: bool, conf: f64, rsn: OccupancyReason) -> TelemetryMessage {
        TelemetryMessage {
            sid: "s1".into(),
            tid: "t1".into(),
            seq,
            ts: seq * 1000,
            tilt: 0.0,
            pwr: 0.92,
            body: MessageBody::Report { occ, conf, rsn, dist: 40.0 },
        }
    }

    fn hb(seq: u64) -> TelemetryMessage {
        TelemetryMessage { body: MessageBody::Heartbeat, ..report(seq, false, 0.0, OccupancyReason::None) }
    }

    fn alarm_msg(seq: u64, akind: AlarmKind) -> TelemetryMessage {
        TelemetryMessage {
            body: MessageBody::Alarm { akind, sev: Severity::Critical },
            ..report(seq, false, 0.0, OccupancyReason::None)
        }
    }

    const VIS: OccupancyReason = OccupancyReason::VisualConfirmation;
    const COL: OccupancyReason = OccupancyReason::CollisionFallback;

    #[test]
    fn duplicate_replayed_five_times() {
        let mut svc = CloudService::new(cfg());
        let m = report(1, true, 0.9, VIS);
        assert!(svc.submit(&m, 0).unwrap().applied);
        let after_one = svc.state().clone();
        for i in 0..5 {
            assert!(!svc.submit(&m, 10 + i).unwrap().applied);
        }
        assert_eq!(svc.state(), &after_one);
        assert_eq!(svc.counters().reports_applied, 1);
        assert_eq!(svc.counters().duplicates, 5);
    }

    #[test]
    fn lower_seq_is_noop_even_with_higher_conf() {
        let mut svc = CloudService::new(cfg());
        svc.submit(&report(10, true, 0.9, VIS), 0).unwrap();
        assert!(!svc.submit(&report(9, true, 0.99, VIS), 1).unwrap().applied);
        assert_eq!(svc.state().spaces["s1"].last_key, Some(OrderingKey { seq: 10, conf: 0.9 }));
        assert!(svc.submit(&report(10, true, 0.95, VIS), 2).unwrap().applied);
    }

    #[test]
    fn two_reports_flip_and_open_order() {
        let mut svc = CloudService::new(cfg());
        let o = svc.submit(&report(1, true, 0.9, VIS), 0).unwrap();
        assert!(o.effects.is_empty());
        assert!(!svc.state().spaces["s1"].business_occ);
        let o = svc.submit(&report(2, true, 0.9, VIS), 5_000).unwrap();
        assert!(matches!(o.effects.as_slice(), [Effect::OrderOpened { .. }]));
        let rec = &svc.state().spaces["s1"];
        assert!(rec.business_occ && rec.pending.is_none());
        assert_eq!(svc.flip_latencies(), &[5_000]);
        svc.check_invariants().unwrap();
    }

    #[test]
    fn single_report_flips_on_sweep_after_window() {
        let mut svc = CloudService::new(cfg());
        svc.submit(&report(1, true, 0.9, VIS), 1_000).unwrap();
        assert!(svc.sweep(10_999).is_empty());
        let effects = svc.sweep(11_000);
        assert!(matches!(effects.as_slice(), [Effect::OrderOpened { .. }]));
        svc.submit(&report(2, false, 0.0, OccupancyReason::None), 100_000).unwrap();
        let effects = svc.sweep(110_000);
        let [Effect::OrderClosed { fee, .. }] = effects.as_slice() else { panic!("{effects:?}") };
        assert_eq!(*fee, 0.10);
        svc.check_invariants().unwrap();
    }

    #[test]
    fn contradicting_report_resets_pending() {
        let mut svc = CloudService::new(cfg());
        svc.submit(&report(1, true, 0.9, VIS), 0).unwrap();
        svc.submit(&report(2, false, 0.0, OccupancyReason::None), 1_000).unwrap();
        assert!(svc.state().spaces["s1"].pending.is_none());
        svc.submit(&report(3, true, 0.9, VIS), 2_000).unwrap();
        assert_eq!(svc.state().spaces["s1"].pending.unwrap().consistent_reports, 1);
    }

    #[test]
    fn unknown_space_and_schema_rejected() {
        let mut svc = CloudService::new(cfg());
        let mut m = report(1, true, 0.9, VIS);
        m.sid = "zz".into();
        assert!(matches!(svc.submit(&m, 0), Err(CloudError::UnknownSpace(_))));
        let mut m = report(1, true, 0.9, VIS);
        m.tilt = 500.0;
        assert!(matches!(svc.submit(&m, 0), Err(CloudError::Schema(_))));
        assert_eq!(svc.counters().rejected, 2);
    }

    #[test]
    fn heartbeat_health_cycle() {
        let mut svc = CloudService::new(cfg());
        svc.submit(&hb(1), 0).unwrap();
        assert_eq!(svc.nodes()[0].status, NodeStatus::Online);
        assert!(svc.sweep(10_000).is_empty());
        let effects = svc.sweep(95_000);
        assert!(matches!(effects.as_slice(), [Effect::AlarmRaised { kind: CloudAlarmKind::Offline, .. }]));
        assert_eq!(svc.nodes()[0].missed, 3);
        assert!(svc.sweep(125_000).is_empty());
        let o = svc.submit(&hb(2), 130_000).unwrap();
        assert!(matches!(o.effects.as_slice(), [Effect::AlarmCleared { kind: CloudAlarmKind::Offline, .. }]));
        let n = &svc.nodes()[0];
        assert_eq!((n.status, n.missed, n.last_seen_ts), (NodeStatus::Online, 0, 130_000));
        svc.check_invariants().unwrap();
    }

    #[test]
    fn heartbeat_uses_receive_time() {
        let mut svc = CloudService::new(cfg());
        let mut m = hb(1);
        m.ts = 1;
        svc.submit(&m, 50_000).unwrap();
        assert_eq!(svc.nodes()[0].last_seen_ts, 50_000);
    }

    #[test]
    fn heartbeat_registers_unknown_space() {
        let mut svc = CloudService::new(CloudConfig::default());
        svc.submit(&hb(1), 0).unwrap();
        assert_eq!(svc.space_summaries().len(), 1);
        let strict = CloudConfig { register_on_heartbeat: false, ..CloudConfig::default() };
        assert!(CloudService::new(strict).submit(&hb(1), 0).is_err());
    }

    #[test]
    fn illegal_parking_after_grace() {
        let mut svc = CloudService::new(cfg());
        svc.submit(&report(1, true, 0.5, COL), 0).unwrap();
        svc.submit(&report(2, true, 0.5, COL), 1_000).unwrap();
        assert!(svc.sweep(121_000).is_empty());
        let effects = svc.sweep(361_000);
        assert!(matches!(effects.as_slice(), [Effect::AlarmRaised { kind: CloudAlarmKind::IllegalParking, .. }]));
        assert!(svc.sweep(400_000).is_empty());
        let o = svc.submit(&report(3, true, 0.9, VIS), 401_000).unwrap();
        assert!(matches!(o.effects.as_slice(), [Effect::AlarmCleared { kind: CloudAlarmKind::IllegalParking, .. }]));
    }

    #[test]
    fn visual_occupancy_never_illegal() {
        let mut svc = CloudService::new(cfg());
        svc.submit(&report(1, true, 0.9, VIS), 0).unwrap();
        svc.submit(&report(2, true, 0.9, VIS), 1_000).unwrap();
        assert!(svc.sweep(400_000).is_empty());
    }

    #[test]
    fn alarm_messages_dedup_and_lifecycle() {
        let mut svc = CloudService::new(cfg());
        let o = svc.submit(&alarm_msg(5, AlarmKind::Tilt), 0).unwrap();
        let [Effect::AlarmRaised { alarm_id, .. }] = o.effects.as_slice() else { panic!() };
        let id = alarm_id.clone();
        assert!(!svc.submit(&alarm_msg(5, AlarmKind::Tilt), 1).unwrap().applied);
        assert!(svc.submit(&alarm_msg(6, AlarmKind::Tilt), 60_000).unwrap().effects.is_empty());
        assert_eq!(svc.alarms(Some(AlarmState::Open)).len(), 1);
        assert!(svc.alarm_transition(&id, AlarmAction::Resolve, "op", 2).is_err());
        svc.alarm_transition(&id, AlarmAction::Ack, "op", 3).unwrap();
        let a = svc.alarm_transition(&id, AlarmAction::Resolve, "op", 4).unwrap();
        assert_eq!(a.state, AlarmState::Resolved);
        assert!(svc.state().spaces["s1"].active_alarms.is_empty());
        assert!(svc.alarm_transition(&id, AlarmAction::Ack, "op", 5).is_err());
        assert!(matches!(svc.alarm_transition("nope", AlarmAction::Ack, "op", 5), Err(CloudError::UnknownAlarm(_))));
        assert!(!svc.submit(&alarm_msg(7, AlarmKind::Tilt), 70_000).unwrap().effects.is_empty());
    }

    #[test]
    fn replay_rebuilds_and_is_idempotent() {
        let log = MemoryLog::new();
        let mut svc = CloudService::new(cfg()).with_log(Box::new(log.clone()));
        svc.submit(&hb(1), 0).unwrap();
        svc.submit(&report(2, true, 0.9, VIS), 1_000).unwrap();
        svc.submit(&report(3, true, 0.9, VIS), 6_000).unwrap();
        svc.submit(&alarm_msg(4, AlarmKind::Tilt), 7_000).unwrap();
        svc.alarm_transition("a000001", AlarmAction::Ack, "op", 8_000).unwrap();
        svc.sweep(100_000);
        svc.submit(&report(5, false, 0.0, OccupancyReason::None), 101_000).unwrap();
        svc.submit(&report(6, false, 0.0, OccupancyReason::None), 102_000).unwrap();
        let entries = log.entries();
        let once = CloudService::recover(cfg(), &entries, None);
        assert_eq!(once.state(), svc.state());
        let twice_entries: Vec<LogEntry> = entries.iter().chain(entries.iter()).cloned().collect();
        let twice = CloudService::recover(cfg(), &twice_entries, None);
        assert_eq!(twice.state(), svc.state());
    }

    #[test]
    fn metrics_summary() {
        let mut svc = CloudService::new(cfg());
        svc.register_space("s2", "t2");
        svc.submit(&report(1, true, 0.9, VIS), 0).unwrap();
        svc.submit(&report(2, true, 0.9, VIS), 1_000).unwrap();
        let m = svc.metrics();
        assert_eq!((m.spaces, m.occupied, m.orders_open), (2, 1, 1));
        assert_eq!(m.occupancy_rate, 0.5);
        assert_eq!(m.average_reported_power_w, Some(0.92));
    }

    #[test]
    fn latency_percentiles() {
        let s = LatencyStats::from_samples(&[5, 1, 3, 2, 4]);
        assert_eq!((s.count, s.p50_ms, s.p95_ms, s.max_ms), (5, 3, 5, 5));
        assert_eq!(s.mean_ms, 3.0);
        assert_eq!(LatencyStats::from_samples(&[]).count, 0);
    }
}
