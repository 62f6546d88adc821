//! Post-network half of the visual pipeline.
//!
//! A [`Detector`] backend produces raw boxes; [`VisionPipeline`] applies the
//! confidence filter, greedy NMS and the per-space ROI decision. The default
//! backend, [`SyntheticDetector`], draws boxes from a seeded model of the
//! scene in place of a neural network.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Output channels of a YOLO detection head with three anchors per scale.
pub fn head_filters(classes: u32) -> Result<u32, ConfigError> {
    if classes < 1 {
        return Err(ConfigError::Invalid("detector needs at least one class".into()));
    }
    Ok((classes + 5) * 3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticDistributions {
    pub daylight: ConfidenceModel,
    pub night: ConfidenceModel,
    pub occluded: ConfidenceModel,
    /// Expected clutter boxes per frame.
    pub clutter_rate: f64,
    pub clutter: ConfidenceModel,
}

impl Default for SyntheticDistributions {
    fn default() -> Self {
        SyntheticDistributions {
            daylight: ConfidenceModel { mean: 0.85, sd: 0.05 },
            night: ConfidenceModel { mean: 0.30, sd: 0.10 },
            occluded: ConfidenceModel { mean: 0.10, sd: 0.05 },
            clutter_rate: 0.02,
            clutter: ConfidenceModel { mean: 0.15, sd: 0.05 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub input_size: u32,
    pub conf_threshold: f64,
    pub nms_threshold: f64,
    pub classes: u32,
    pub simulated_latency_ms: u64,
    pub synthetic: SyntheticDistributions,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            input_size: 416,
            conf_threshold: 0.25,
            nms_threshold: 0.50,
            classes: 1,
            simulated_latency_ms: 700,
            synthetic: SyntheticDistributions::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.conf_threshold) {
            return Err(ConfigError::Invalid(format!("conf_threshold {} not in (0, 1)", self.conf_threshold)));
        }
        if !open_unit(self.nms_threshold) {
            return Err(ConfigError::Invalid(format!("nms_threshold {} not in (0, 1)", self.nms_threshold)));
        }
        if self.input_size == 0 {
            return Err(ConfigError::Invalid("input_size must be positive".into()));
        }
        if self.synthetic.clutter_rate < 0.0 {
            return Err(ConfigError::Invalid("clutter_rate must be nonnegative".into()));
        }
        head_filters(self.classes).map(|_| ())
    }

    /// Channel count the configured head must expose.
    pub fn head_filters(&self) -> Result<u32, ConfigError> {
        head_filters(self.classes)
    }
}

/// Axis-aligned box, top-left origin, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
    pub class_id: u32,
}

impl DetBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, confidence: f64) -> Self {
        DetBox { x, y, w, h, confidence, class_id: 0 }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }
}

pub const VEHICLE_CLASS: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceRoi {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl SpaceRoi {
    pub fn new(x: f64, y: f64, w: f64, h: f64, input_size: u32) -> Result<Self, ConfigError> {
        let s = input_size as f64;
        if !(w > 0.0 && h > 0.0 && x >= 0.0 && y >= 0.0 && x + w <= s && y + h <= s) {
            return Err(ConfigError::Invalid(format!(
                "ROI ({x},{y},{w},{h}) must be a nonempty rectangle inside {s}x{s}"
            )));
        }
        Ok(SpaceRoi { x, y, w, h })
    }

    /// Half-open containment, so adjacent ROIs never both claim a point.
    pub fn contains(&self, (px, py): (f64, f64)) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisionVerdict {
    pub vehicle_present: bool,
    pub best_confidence: f64,
    pub boxes_kept: usize,
}

impl VisionVerdict {
    pub fn absent() -> Self {
        VisionVerdict { vehicle_present: false, best_confidence: 0.0, boxes_kept: 0 }
    }
}

pub fn filter_confidence(boxes: &[DetBox], threshold: f64) -> Vec<DetBox> {
    boxes.iter().filter(|b| b.confidence >= threshold).copied().collect()
}

pub fn iou(a: &DetBox, b: &DetBox) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy per-class NMS. Equal confidences are ordered by input index.
pub fn nms_greedy(boxes: &[DetBox], iou_threshold: f64) -> Vec<DetBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| boxes[j].confidence.total_cmp(&boxes[i].confidence).then(i.cmp(&j)));
    let mut kept: Vec<DetBox> = Vec::new();
    for i in order {
        let b = &boxes[i];
        if kept.iter().all(|k| k.class_id != b.class_id || iou(k, b) <= iou_threshold) {
            kept.push(*b);
        }
    }
    kept
}

pub fn decide_occupancy(kept: &[DetBox], roi: &SpaceRoi, conf_threshold: f64) -> VisionVerdict {
    let best = kept
        .iter()
        .filter(|b| b.class_id == VEHICLE_CLASS && roi.contains(b.center()))
        .map(|b| b.confidence)
        .fold(0.0_f64, f64::max);
    VisionVerdict {
        vehicle_present: best >= conf_threshold && best > 0.0,
        best_confidence: best,
        boxes_kept: kept.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Light {
    #[default]
    Day,
    Night,
}

/// Ground truth the synthetic detector looks at for one space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Scene {
    pub vehicle_present: bool,
    pub light: Light,
    pub occluded: bool,
}

/// Boundary for any detection backend.
pub trait Detector {
    /// Raw boxes for the camera's view of `roi`.
    fn detect(&mut self, scene: &Scene, roi: &SpaceRoi) -> Vec<DetBox>;
    /// Simulated time one invocation occupies.
    fn latency_ms(&self) -> u64;
}

pub struct SyntheticDetector {
    cfg: DetectorConfig,
    rng: ChaCha8Rng,
}

impl SyntheticDetector {
    pub fn new(cfg: DetectorConfig, seed: u64) -> Self {
        SyntheticDetector { cfg, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Detector for SyntheticDetector {
    fn detect(&mut self, scene: &Scene, roi: &SpaceRoi) -> Vec<DetBox> {
        synthetic_detect(scene, roi, &self.cfg, &mut self.rng)
    }

    fn latency_ms(&self) -> u64 {
        self.cfg.simulated_latency_ms
    }
}

fn draw_confidence<R: Rng + ?Sized>(m: ConfidenceModel, rng: &mut R) -> f64 {
    let c = match Normal::new(m.mean, m.sd.max(0.0)) {
        Ok(n) => n.sample(rng),
        Err(_) => m.mean,
    };
    c.clamp(0.0, 1.0)
}

fn clip_box(mut b: DetBox, size: f64) -> DetBox {
    b.x = b.x.clamp(0.0, size - 1.0);
    b.y = b.y.clamp(0.0, size - 1.0);
    b.w = b.w.clamp(1.0, size - b.x);
    b.h = b.h.clamp(1.0, size - b.y);
    b
}

/// Deterministic under a fixed generator state.
pub fn synthetic_detect<R: Rng + ?Sized>(
    scene: &Scene,
    roi: &SpaceRoi,
    cfg: &DetectorConfig,
    rng: &mut R,
) -> Vec<DetBox> {
    let size = cfg.input_size as f64;
    let dist = &cfg.synthetic;
    let mut out = Vec::new();
    if scene.vehicle_present {
        let model = if scene.occluded {
            dist.occluded
        } else {
            match scene.light {
                Light::Day => dist.daylight,
                Light::Night => dist.night,
            }
        };
        let confidence = draw_confidence(model, rng);
        let (cx, cy) = (roi.x + roi.w / 2.0, roi.y + roi.h / 2.0);
        let jx = rng.random_range(-0.1..=0.1) * roi.w;
        let jy = rng.random_range(-0.1..=0.1) * roi.h;
        let scale = rng.random_range(0.8..=1.1);
        let (w, h) = (roi.w * scale, roi.h * scale);
        out.push(clip_box(
            DetBox { x: cx + jx - w / 2.0, y: cy + jy - h / 2.0, w, h, confidence, class_id: VEHICLE_CLASS },
            size,
        ));
    }
    if dist.clutter_rate > 0.0 {
        let n = Poisson::new(dist.clutter_rate).map(|p| p.sample(rng) as usize).unwrap_or(0);
        for _ in 0..n {
            let w = rng.random_range(10.0..=size / 4.0);
            let h = rng.random_range(10.0..=size / 4.0);
            let x = rng.random_range(0.0..=(size - w));
            let y = rng.random_range(0.0..=(size - h));
            let confidence = draw_confidence(dist.clutter, rng);
            out.push(clip_box(DetBox { x, y, w, h, confidence, class_id: VEHICLE_CLASS }, size));
        }
    }
    out
}

/// Filter, suppress, decide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisionPipeline {
    pub conf_threshold: f64,
    pub nms_threshold: f64,
    pub occupancy_threshold: f64,
}

impl VisionPipeline {
    pub fn new(cfg: &DetectorConfig, occupancy_threshold: f64) -> Self {
        VisionPipeline { conf_threshold: cfg.conf_threshold, nms_threshold: cfg.nms_threshold, occupancy_threshold }
    }

    pub fn evaluate(&self, raw: &[DetBox], roi: &SpaceRoi) -> VisionVerdict {
        let filtered = filter_confidence(raw, self.conf_threshold);
        let kept = nms_greedy(&filtered, self.nms_threshold);
        decide_occupancy(&kept, roi, self.occupancy_threshold)
    }
}
