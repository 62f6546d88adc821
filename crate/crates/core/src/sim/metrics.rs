use serde::Serialize;

use crate::cloud::LatencyStats;
use crate::fusion::{FusionMode, OccupancyState};
use crate::protocol::OccupancyReason;

/// Node decisions against ground truth, sampled on a fixed cadence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn record(&mut self, truth: bool, decided: bool) {
        match (truth, decided) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceMetrics {
    pub space_id: String,
    pub mode: FusionMode,
    pub final_state: OccupancyState,
    pub final_reason: OccupancyReason,
    pub business_occ: bool,
    pub confusion: Confusion,
    pub steps: u64,
    pub ir_samples: u64,
    pub detector_invocations: u64,
    pub detector_active_ms: u64,
    pub detector_duty: f64,
    pub average_power_w: f64,
    pub savings_vs_always_on: f64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
    pub alarms_sent: u64,
}

/// `sent = applied + duplicate + dropped + corrupt + rejected` when no
/// transport failure occurred.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MessageCounters {
    pub sent: u64,
    pub dropped: u64,
    pub corrupt: u64,
    pub duplicate: u64,
    pub applied: u64,
    pub rejected: u64,
    pub retries: u64,
    pub transport_failures: u64,
}

impl MessageCounters {
    pub fn conserved(&self) -> bool {
        self.sent == self.applied + self.duplicate + self.dropped + self.corrupt + self.rejected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudTotals {
    pub occupied_spaces: usize,
    pub orders_opened: usize,
    pub orders_closed: usize,
    pub revenue: f64,
    pub open_alarms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub duration_ms: u64,
    pub spaces: Vec<SpaceMetrics>,
    pub confusion: Confusion,
    pub latency: LatencyStats,
    pub average_power_w: f64,
    pub savings_vs_always_on: f64,
    pub messages: MessageCounters,
    pub cloud: CloudTotals,
}

impl MetricsReport {
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn space(&self, id: &str) -> Option<&SpaceMetrics> {
        self.spaces.iter().find(|s| s.space_id == id)
    }
}
