//! Tilt and impact extraction from a 3-axis accelerometer.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    /// Acceleration in g.
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    /// Milliseconds.
    pub t: u64,
}

impl AccelSample {
    pub fn new(ax: f64, ay: f64, az: f64, t: u64) -> Self {
        AccelSample { ax, ay, az, t }
    }

    pub fn magnitude(&self) -> f64 {
        (self.ax * self.ax + self.ay * self.ay + self.az * self.az).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InertialEvent {
    Impact,
    TiltAlarmOn,
    TiltAlarmOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InertialSettings {
    pub impact_threshold_g: f64,
    pub tilt_alarm_threshold_deg: f64,
    pub quasi_static_low_g: f64,
    pub quasi_static_high_g: f64,
    pub lookback_ms: u64,
}

impl Default for InertialSettings {
    fn default() -> Self {
        InertialSettings {
            impact_threshold_g: 1.5,
            tilt_alarm_threshold_deg: 25.0,
            quasi_static_low_g: 0.8,
            quasi_static_high_g: 1.2,
            lookback_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InertialState {
    tilt_deg: Option<f64>,
    last_impact_t: Option<u64>,
    tilt_alarm: bool,
    settings: InertialSettings,
}

impl Default for InertialState {
    fn default() -> Self {
        InertialState::new(InertialSettings::default())
    }
}

impl InertialState {
    pub fn new(settings: InertialSettings) -> Self {
        InertialState { tilt_deg: None, last_impact_t: None, tilt_alarm: false, settings }
    }

    pub fn tilt_deg(&self) -> Option<f64> {
        self.tilt_deg
    }

    pub fn last_impact_t(&self) -> Option<u64> {
        self.last_impact_t
    }

    pub fn tilt_alarm_active(&self) -> bool {
        self.tilt_alarm
    }

    pub fn settings(&self) -> &InertialSettings {
        &self.settings
    }

    /// Tilt is only refreshed from quasi-static samples so the impact
    /// transient itself never reads as tilt.
    pub fn ingest(&mut self, s: &AccelSample) -> Vec<InertialEvent> {
        let mut events = Vec::new();
        let mag = s.magnitude();
        if !mag.is_finite() || mag == 0.0 {
            return events;
        }
        if (mag - 1.0).abs() > self.settings.impact_threshold_g {
            self.last_impact_t = Some(s.t);
            events.push(InertialEvent::Impact);
        }
        if mag >= self.settings.quasi_static_low_g && mag <= self.settings.quasi_static_high_g {
            let tilt = (s.az / mag).clamp(-1.0, 1.0).acos().to_degrees();
            self.tilt_deg = Some(tilt);
            let over = tilt > self.settings.tilt_alarm_threshold_deg;
            if over && !self.tilt_alarm {
                self.tilt_alarm = true;
                events.push(InertialEvent::TiltAlarmOn);
            } else if !over && self.tilt_alarm {
                self.tilt_alarm = false;
                events.push(InertialEvent::TiltAlarmOff);
            }
        }
        events
    }

    pub fn impact_within(&self, now: u64, lookback_ms: u64) -> bool {
        match self.last_impact_t {
            Some(t) => now.saturating_sub(t) <= lookback_ms,
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gravity_aligned_is_level() {
        let mut st = InertialState::default();
        let ev = st.ingest(&AccelSample::new(0.0, 0.0, 1.0, 0));
        assert!(ev.is_empty());
        assert_eq!(st.tilt_deg(), Some(0.0));
    }

    #[test]
    fn thirty_degrees_raises_tilt_alarm() {
        let mut st = InertialState::default();
        let ev = st.ingest(&AccelSample::new(0.5, 0.0, 3f64.sqrt() / 2.0, 0));
        assert_eq!(ev, vec![InertialEvent::TiltAlarmOn]);
        assert!((st.tilt_deg().unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn impact_outside_quasi_static_band() {
        let mut st = InertialState::default();
        st.ingest(&AccelSample::new(0.0, 0.0, 1.0, 0));
        let ev = st.ingest(&AccelSample::new(0.0, 0.0, 3.0, 500));
        assert_eq!(ev, vec![InertialEvent::Impact]);
        assert_eq!(st.tilt_deg(), Some(0.0));
        assert_eq!(st.last_impact_t(), Some(500));
    }

    #[test]
    fn zero_magnitude_ignored() {
        let mut st = InertialState::default();
        let before = st.clone();
        assert!(st.ingest(&AccelSample::new(0.0, 0.0, 0.0, 10)).is_empty());
        assert_eq!(st, before);
    }

    #[test]
    fn tilt_alarm_clears() {
        let mut st = InertialState::default();
        let r = 26f64.to_radians();
        st.ingest(&AccelSample::new(r.sin(), 0.0, r.cos(), 0));
        let ev = st.ingest(&AccelSample::new(0.0, 0.0, 1.0, 100));
        assert_eq!(ev, vec![InertialEvent::TiltAlarmOff]);
    }

    #[test]
    fn impact_lookback() {
        let mut st = InertialState::default();
        assert!(!st.impact_within(1_000, 10_000));
        st.last_impact_t = Some(5_000);
        assert!(st.impact_within(12_000, 10_000));
        st.last_impact_t = Some(0);
        assert!(st.impact_within(10_000, 10_000));
        assert!(!st.impact_within(20_001, 10_000));
    }
}
