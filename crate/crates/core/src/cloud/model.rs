use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::protocol::{OccupancyReason, Severity};

use super::CloudError;

/// `(seq, conf)` compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingKey {
    pub seq: u64,
    pub conf: f64,
}

impl OrderingKey {
    pub fn cmp_key(&self, other: &OrderingKey) -> Ordering {
        self.seq.cmp(&other.seq).then(self.conf.total_cmp(&other.conf))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingOccupancy {
    pub occ: bool,
    pub reason: OccupancyReason,
    pub first_seen_ts: u64,
    pub consistent_reports: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusinessSpaceRecord {
    pub space_id: String,
    pub terminal_id: String,
    pub business_occ: bool,
    pub reason: OccupancyReason,
    pub last_key: Option<OrderingKey>,
    /// Edge timestamp of the last applied report; display only.
    pub last_ts: Option<u64>,
    pub pending: Option<PendingOccupancy>,
    pub open_order: Option<String>,
    pub active_alarms: BTreeSet<String>,
    /// Service time the current reason took effect.
    pub reason_since: Option<u64>,
    pub illegal_flagged: bool,
    pub last_alarm_seq: u64,
    pub last_pwr: Option<f64>,
    pub last_dist: Option<f64>,
    pub last_tilt: Option<f64>,
}

impl BusinessSpaceRecord {
    pub fn new(space_id: &str, terminal_id: &str) -> Self {
        BusinessSpaceRecord {
            space_id: space_id.to_string(),
            terminal_id: terminal_id.to_string(),
            business_occ: false,
            reason: OccupancyReason::None,
            last_key: None,
            last_ts: None,
            pending: None,
            open_order: None,
            active_alarms: BTreeSet::new(),
            reason_since: None,
            illegal_flagged: false,
            last_alarm_seq: 0,
            last_pwr: None,
            last_dist: None,
            last_tilt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: String,
    pub space_id: String,
    pub open_ts: u64,
    pub close_ts: Option<u64>,
    /// Currency per started minute.
    pub rate: f64,
    pub fee: Option<f64>,
}

impl Order {
    pub fn open(id: String, space_id: String, open_ts: u64, rate: f64) -> Self {
        Order { id, space_id, open_ts, close_ts: None, rate, fee: None }
    }

    pub fn is_open(&self) -> bool {
        self.close_ts.is_none()
    }

    /// Fee is charged per started minute and rounded to cents.
    pub fn close(&mut self, close_ts: u64) -> Result<f64, CloudError> {
        if self.close_ts.is_some() {
            return Err(CloudError::OrderClosed(self.id.clone()));
        }
        let close_ts = close_ts.max(self.open_ts);
        let minutes = (close_ts - self.open_ts).div_ceil(60_000);
        let fee = (self.rate * minutes as f64 * 100.0).round() / 100.0;
        self.close_ts = Some(close_ts);
        self.fee = Some(fee);
        Ok(fee)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudAlarmKind {
    Tilt,
    Obstructed,
    Offline,
    IllegalParking,
}

impl CloudAlarmKind {
    /// Kinds the service clears by itself when the condition ends.
    pub fn auto_clearing(self) -> bool {
        matches!(self, CloudAlarmKind::Offline | CloudAlarmKind::IllegalParking)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmState {
    Open,
    Acknowledged,
    Resolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmAction {
    Ack,
    Resolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub id: String,
    pub space_id: String,
    pub kind: CloudAlarmKind,
    pub severity: Severity,
    pub raised_ts: u64,
    pub state: AlarmState,
    pub ack_by: Option<String>,
    pub resolved_by: Option<String>,
    pub resolved_ts: Option<u64>,
}

impl Alarm {
    pub fn is_active(&self) -> bool {
        self.state != AlarmState::Resolved
    }

    /// Operator transition. Only auto-clearing kinds may be resolved
    /// straight from open.
    pub fn transition(&mut self, action: AlarmAction, operator: &str, now: u64) -> Result<(), CloudError> {
        let illegal = || CloudError::IllegalTransition { alarm: self.id.clone(), from: self.state, action };
        match (self.state, action) {
            (AlarmState::Open, AlarmAction::Ack) => {
                self.state = AlarmState::Acknowledged;
                self.ack_by = Some(operator.to_string());
            }
            (AlarmState::Acknowledged, AlarmAction::Resolve) => self.resolve(Some(operator), now),
            (AlarmState::Open, AlarmAction::Resolve) if self.kind.auto_clearing() => self.resolve(Some(operator), now),
            _ => return Err(illegal()),
        }
        Ok(())
    }

    pub(crate) fn resolve(&mut self, operator: Option<&str>, now: u64) {
        self.state = AlarmState::Resolved;
        self.resolved_by = operator.map(str::to_string);
        self.resolved_ts = Some(now);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeHealth {
    pub terminal_id: String,
    pub space_id: String,
    /// Service receive time.
    pub last_seen_ts: u64,
    pub status: NodeStatus,
    pub missed: u64,
    pub last_seq: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fee_per_started_minute() {
        let mut o = Order::open("o".into(), "s".into(), 0, 0.05);
        assert_eq!(o.close(3_600_000).unwrap(), 3.0);
        let mut o = Order::open("o".into(), "s".into(), 0, 0.05);
        assert_eq!(o.close(0).unwrap(), 0.0);
        let mut o = Order::open("o".into(), "s".into(), 1_000, 0.05);
        assert_eq!(o.close(62_000).unwrap(), 0.10);
        assert!(matches!(o.close(90_000), Err(CloudError::OrderClosed(_))));
    }

    fn alarm(kind: CloudAlarmKind) -> Alarm {
        Alarm {
            id: "a1".into(),
            space_id: "s1".into(),
            kind,
            severity: Severity::Critical,
            raised_ts: 0,
            state: AlarmState::Open,
            ack_by: None,
            resolved_by: None,
            resolved_ts: None,
        }
    }

    #[test]
    fn alarm_lifecycle() {
        let mut a = alarm(CloudAlarmKind::Tilt);
        assert!(a.transition(AlarmAction::Resolve, "op", 1).is_err());
        a.transition(AlarmAction::Ack, "op", 1).unwrap();
        assert_eq!(a.state, AlarmState::Acknowledged);
        assert_eq!(a.ack_by.as_deref(), Some("op"));
        a.transition(AlarmAction::Resolve, "op", 2).unwrap();
        assert_eq!(a.state, AlarmState::Resolved);
        assert!(a.transition(AlarmAction::Ack, "op", 3).is_err());
        assert!(a.transition(AlarmAction::Resolve, "op", 3).is_err());
    }

    #[test]
    fn auto_clearing_kinds_skip_ack() {
        let mut a = alarm(CloudAlarmKind::Offline);
        a.transition(AlarmAction::Resolve, "op", 1).unwrap();
        assert_eq!(a.state, AlarmState::Resolved);
    }

    #[test]
    fn key_order_is_lexicographic() {
        let a = OrderingKey { seq: 10, conf: 0.9 };
        let b = OrderingKey { seq: 9, conf: 0.99 };
        assert_eq!(b.cmp_key(&a), Ordering::Less);
        let c = OrderingKey { seq: 10, conf: 0.95 };
        assert_eq!(c.cmp_key(&a), Ordering::Greater);
    }
}
