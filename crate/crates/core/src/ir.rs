//! Analog infrared ranger model.
//!
//! The ranger's voltage rises as an object approaches until a peak a few
//! centimetres out, then falls again inside the dead zone. A single voltage
//! below the peak therefore maps to two distances. [`IrCalibration`] holds
//! both branches of the curve; [`IrCalibration::voltage_to_distance`] picks
//! the branch candidate closest to the smoothed history.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// A `(volts, centimetres)` calibration point.
pub type CalPoint = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCalibration", into = "RawCalibration")]
pub struct IrCalibration {
    far_branch: Vec<CalPoint>,
    near_branch: Vec<CalPoint>,
    peak_distance: f64,
    max_range: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCalibration {
    far_branch: Vec<CalPoint>,
    near_branch: Vec<CalPoint>,
    peak_distance: f64,
    max_range: f64,
}

impl TryFrom<RawCalibration> for IrCalibration {
    type Error = ConfigError;

    fn try_from(raw: RawCalibration) -> Result<Self, Self::Error> {
        IrCalibration::new(raw.far_branch, raw.near_branch, raw.peak_distance, raw.max_range)
    }
}

impl From<IrCalibration> for RawCalibration {
    fn from(c: IrCalibration) -> Self {
        RawCalibration {
            far_branch: c.far_branch,
            near_branch: c.near_branch,
            peak_distance: c.peak_distance,
            max_range: c.max_range,
        }
    }
}

impl Default for IrCalibration {
    fn default() -> Self {
        IrCalibration::new(
            vec![(3.1, 6.0), (2.3, 10.0), (1.3, 20.0), (0.75, 40.0), (0.4, 80.0), (0.25, 150.0)],
            vec![(1.0, 0.0), (2.0, 3.0), (3.1, 6.0)],
            6.0,
            150.0,
        )
        .expect("default calibration is valid")
    }
}

fn lerp(x: f64, (x0, y0): (f64, f64), (x1, y1): (f64, f64)) -> f64 {
    if x1 == x0 {
        return y0;
    }
    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
}

/// Interpolate distance for `v` along a branch whose points are sorted by
/// distance. Returns `None` when `v` lies outside the branch's voltage span.
fn branch_distance(branch: &[CalPoint], v: f64) -> Option<f64> {
    branch.windows(2).find_map(|w| {
        let (lo, hi) = if w[0].0 <= w[1].0 { (w[0].0, w[1].0) } else { (w[1].0, w[0].0) };
        (v >= lo && v <= hi).then(|| lerp(v, w[0], w[1]))
    })
}

impl IrCalibration {
    pub fn new(
        far_branch: Vec<CalPoint>,
        near_branch: Vec<CalPoint>,
        peak_distance: f64,
        max_range: f64,
    ) -> Result<Self, ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Calibration(msg.to_string()));
        if far_branch.len() < 2 || near_branch.len() < 2 {
            return bad("each branch needs at least two points");
        }
        if far_branch.iter().chain(&near_branch).any(|(v, d)| !v.is_finite() || !d.is_finite() || *d < 0.0) {
            return bad("calibration points must be finite with nonnegative distance");
        }
        for w in far_branch.windows(2) {
            if !(w[1].1 > w[0].1 && w[1].0 < w[0].0) {
                return bad("far branch must ascend in distance with strictly decreasing voltage");
            }
        }
        for w in near_branch.windows(2) {
            if !(w[1].1 > w[0].1 && w[1].0 > w[0].0) {
                return bad("near branch must ascend in distance with strictly increasing voltage");
            }
        }
        let far_peak = far_branch[0];
        let near_peak = near_branch[near_branch.len() - 1];
        if far_peak != near_peak {
            return bad("branches must share the peak point");
        }
        if far_peak.1 != peak_distance {
            return bad("peak_distance must equal the shared peak point's distance");
        }
        if max_range != far_branch[far_branch.len() - 1].1 {
            return bad("max_range must equal the last far-branch distance");
        }
        Ok(IrCalibration { far_branch, near_branch, peak_distance, max_range })
    }

    pub fn peak_voltage(&self) -> f64 {
        self.far_branch[0].0
    }

    pub fn min_voltage(&self) -> f64 {
        let far_min = self.far_branch[self.far_branch.len() - 1].0;
        far_min.min(self.near_branch[0].0)
    }

    pub fn peak_distance(&self) -> f64 {
        self.peak_distance
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn far_branch(&self) -> &[CalPoint] {
        &self.far_branch
    }

    pub fn near_branch(&self) -> &[CalPoint] {
        &self.near_branch
    }

    /// Both branch candidates for a voltage, `(far, near)`. The voltage is
    /// clamped to the table's span first.
    pub fn candidates(&self, v: f64) -> (f64, Option<f64>) {
        let v = v.clamp(self.min_voltage(), self.peak_voltage());
        if v == self.peak_voltage() {
            return (self.peak_distance, None);
        }
        let far = branch_distance(&self.far_branch, v).unwrap_or(self.max_range);
        let near = branch_distance(&self.near_branch, v);
        (far, near)
    }

    /// Bidirectional lookup. With two candidates the one nearest to the
    /// last smoothed distance wins; with no history the far branch wins.
    pub fn voltage_to_distance(&self, v: f64, last_smoothed: Option<f64>) -> f64 {
        let (far, near) = self.candidates(v);
        match (near, last_smoothed) {
            (Some(near), Some(prev)) if (near - prev).abs() < (far - prev).abs() => near,
            _ => far,
        }
    }

    /// Forward table used by the simulator: distance on the far branch, or on
    /// the near branch below the peak.
    pub fn distance_to_voltage(&self, d: f64) -> f64 {
        let d = d.clamp(0.0, self.max_range);
        let branch = if d < self.peak_distance { &self.near_branch } else { &self.far_branch };
        branch
            .windows(2)
            .find(|w| d >= w[0].1 && d <= w[1].1)
            .map(|w| lerp(d, (w[0].1, w[0].0), (w[1].1, w[1].0)))
            .unwrap_or(self.peak_voltage())
    }
}

/// Slew-limited median filter over the last `window_size` corrected readings.
#[derive(Debug, Clone, PartialEq)]
pub struct IrFilterState {
    window: VecDeque<f64>,
    window_size: usize,
    last_smoothed: Option<f64>,
    slew_limit: f64,
}

impl Default for IrFilterState {
    fn default() -> Self {
        IrFilterState::new(5, 50.0)
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl IrFilterState {
    pub fn new(window_size: usize, slew_limit: f64) -> Self {
        let window_size = window_size.max(1);
        IrFilterState { window: VecDeque::with_capacity(window_size), window_size, last_smoothed: None, slew_limit }
    }

    /// Seed the window with prior readings, oldest first. Keeps at most
    /// `window_size` of them and sets `last_smoothed` to their median.
    pub fn with_history(mut self, readings: &[f64]) -> Self {
        for &r in readings {
            if self.window.len() == self.window_size {
                self.window.pop_front();
            }
            self.window.push_back(r);
        }
        if !self.window.is_empty() {
            self.last_smoothed = Some(median(self.window.make_contiguous()));
        }
        self
    }

    pub fn last_smoothed(&self) -> Option<f64> {
        self.last_smoothed
    }

    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    pub fn smooth(&mut self, raw: f64) -> f64 {
        let raw = raw.max(0.0);
        let clamped = match self.last_smoothed {
            Some(prev) => raw.clamp(prev - self.slew_limit, prev + self.slew_limit),
            None => raw,
        };
        if self.window.len() == self.window_size {
            self.window.pop_front();
        }
        self.window.push_back(clamped);
        let m = median(self.window.make_contiguous());
        self.last_smoothed = Some(m);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerEdge {
    None,
    Rising,
    Falling,
}

/// Hysteresis comparator on the smoothed distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrTrigger {
    trigger_threshold: f64,
    release_threshold: f64,
    triggered: bool,
}

impl Default for IrTrigger {
    fn default() -> Self {
        IrTrigger { trigger_threshold: 80.0, release_threshold: 90.0, triggered: false }
    }
}

impl IrTrigger {
    pub fn new(trigger_threshold: f64, release_threshold: f64) -> Result<Self, ConfigError> {
        if release_threshold.partial_cmp(&trigger_threshold) != Some(Ordering::Greater) {
            return Err(ConfigError::Invalid(format!(
                "release threshold {release_threshold} must exceed trigger threshold {trigger_threshold}"
            )));
        }
        Ok(IrTrigger { trigger_threshold, release_threshold, triggered: false })
    }

    pub fn triggered(&self) -> bool {
        self.triggered
    }

    pub fn trigger_threshold(&self) -> f64 {
        self.trigger_threshold
    }

    pub fn release_threshold(&self) -> f64 {
        self.release_threshold
    }

    pub fn set_triggered(&mut self, triggered: bool) {
        self.triggered = triggered;
    }

    pub fn update(&mut self, smoothed: f64) -> TriggerEdge {
        if !self.triggered && smoothed < self.trigger_threshold {
            self.triggered = true;
            TriggerEdge::Rising
        } else if self.triggered && smoothed >= self.release_threshold {
            self.triggered = false;
            TriggerEdge::Falling
        } else {
            TriggerEdge::None
        }
    }
}

/// Borderline readings within `band` of the trigger threshold are pulled
/// `offset` centimetres toward the triggered side.
pub fn critical_bias(distance: f64, trigger_threshold: f64, band: f64, offset: f64) -> f64 {
    if (distance - trigger_threshold).abs() <= band {
        (distance - offset).max(0.0)
    } else {
        distance
    }
}

/// One processed IR sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrReading {
    pub corrected: f64,
    pub smoothed: f64,
    pub edge: TriggerEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrSettings {
    pub window: usize,
    pub slew_limit_cm: f64,
    pub trigger_cm: f64,
    pub release_cm: f64,
    pub critical_bias: bool,
    pub bias_band_cm: f64,
    pub bias_offset_cm: f64,
}

impl Default for IrSettings {
    fn default() -> Self {
        IrSettings {
            window: 5,
            slew_limit_cm: 50.0,
            trigger_cm: 80.0,
            release_cm: 90.0,
            critical_bias: false,
            bias_band_cm: 5.0,
            bias_offset_cm: 2.0,
        }
    }
}

/// Lookup, smoothing and trigger chained together for one space.
#[derive(Debug, Clone)]
pub struct IrChannel {
    calibration: IrCalibration,
    filter: IrFilterState,
    trigger: IrTrigger,
    settings: IrSettings,
}

impl IrChannel {
    pub fn new(calibration: IrCalibration, settings: IrSettings) -> Result<Self, ConfigError> {
        Ok(IrChannel {
            calibration,
            filter: IrFilterState::new(settings.window, settings.slew_limit_cm),
            trigger: IrTrigger::new(settings.trigger_cm, settings.release_cm)?,
            settings,
        })
    }

    pub fn calibration(&self) -> &IrCalibration {
        &self.calibration
    }

    pub fn filter(&self) -> &IrFilterState {
        &self.filter
    }

    pub fn trigger(&self) -> &IrTrigger {
        &self.trigger
    }

    pub fn sample(&mut self, voltage: f64) -> IrReading {
        let mut corrected = self.calibration.voltage_to_distance(voltage, self.filter.last_smoothed());
        if self.settings.critical_bias {
            corrected = critical_bias(
                corrected,
                self.trigger.trigger_threshold(),
                self.settings.bias_band_cm,
                self.settings.bias_offset_cm,
            );
        }
        let smoothed = self.filter.smooth(corrected);
        let edge = self.trigger.update(smoothed);
        IrReading { corrected, smoothed, edge }
    }
}
