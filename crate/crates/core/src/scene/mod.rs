//! Scene perception: detector output ingestion, pixel-to-world mapping,
//! spatial referents and the scene caption handed to the prompt builder.
//!
//! Boxes use the center convention `(x, y, w, h)` in image pixels. Rows grow
//! downward; a [`Calibration`] decides whether world `y` grows up or down.

mod caption;
mod detector;
mod referent;

pub(crate) use caption::fmt2;
pub use caption::{caption, Caption, Fact, CAPTION_TEMPLATE_VERSION};
pub use detector::{Detector, FixtureDetector, ImageRef, RemoteDetector, DEFAULT_DETECTOR_TIMEOUT};
pub use referent::{resolve_referent, Qualifier};

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("box of detection {index} ({label}) lies outside the {width}x{height} image")]
    Bounds {
        index: usize,
        label: String,
        width: u32,
        height: u32,
    },
    #[error("invalid value: {0}")]
    Value(String),
    #[error("no detection matches {0:?}")]
    NoMatch(String),
    #[error("{phrase:?} matches {count} detections and carries no positional qualifier")]
    AmbiguousReferent { phrase: String, count: usize },
    #[error("scene {0} has no calibration")]
    MissingCalibration(String),
    #[error("detector: {0}")]
    Detector(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn center(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// `(left, top, right, bottom)` corners in pixels.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        (self.x - hw, self.y - hh, self.x + hw, self.y + hh)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: String,
    pub label: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub pixels_per_meter: f64,
    pub origin_px: [f64; 2],
    pub y_up: bool,
}

impl Calibration {
    pub fn new(pixels_per_meter: f64, origin_px: [f64; 2], y_up: bool) -> Result<Self, SceneError> {
        let c = Self {
            pixels_per_meter,
            origin_px,
            y_up,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.pixels_per_meter.is_finite() && self.pixels_per_meter > 0.0) {
            return Err(SceneError::Value(format!(
                "pixels_per_meter must be positive and finite, got {}",
                self.pixels_per_meter
            )));
        }
        if !self.origin_px.iter().all(|v| v.is_finite()) {
            return Err(SceneError::Value("origin_px must be finite".into()));
        }
        Ok(())
    }

    pub fn to_world(&self, point_px: (f64, f64)) -> (f64, f64) {
        let [ox, oy] = self.origin_px;
        let x = (point_px.0 - ox) / self.pixels_per_meter;
        let dy = (point_px.1 - oy) / self.pixels_per_meter;
        (x, if self.y_up { -dy } else { dy })
    }

    pub fn from_world(&self, point_m: (f64, f64)) -> (f64, f64) {
        let [ox, oy] = self.origin_px;
        let x = point_m.0 * self.pixels_per_meter + ox;
        let dy = point_m.1 * self.pixels_per_meter;
        (x, if self.y_up { oy - dy } else { oy + dy })
    }
}

/// `to_world` as a free function, mirroring [`Calibration::to_world`].
pub fn to_world(point_px: (f64, f64), calib: &Calibration) -> (f64, f64) {
    calib.to_world(point_px)
}

/// Detector wire document: what a fixture file or a remote detector returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub image_id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub detections: Vec<DetectionDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    /// Fixture-only extension: how long the detector "took" under the
    /// simulated clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated_latency_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionDocument {
    pub label: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl SceneDocument {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        serde_json::from_str(text).map_err(|e| SceneError::Schema(e.to_string()))
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, SceneError> {
        serde_json::from_value(value).map_err(|e| SceneError::Schema(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePerception {
    pub image_id: String,
    pub width_px: u32,
    pub height_px: u32,
    /// Ordered by ascending center-x (ties broken by row, label, size and
    /// confidence), so the order never depends on detector output order.
    pub detections: Vec<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

impl ScenePerception {
    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Detection> {
        self.detections.iter().find(|d| d.id == id)
    }

    /// Fill in `calib` when the detector supplied none.
    pub fn with_default_calibration(mut self, calib: Option<Calibration>) -> Self {
        if self.calibration.is_none() {
            self.calibration = calib;
        }
        self
    }

    pub fn world_position(&self, det: &Detection) -> Option<(f64, f64)> {
        self.calibration.map(|c| c.to_world(det.bbox.center()))
    }

    pub fn to_document(&self) -> SceneDocument {
        SceneDocument {
            image_id: self.image_id.clone(),
            width_px: self.width_px,
            height_px: self.height_px,
            detections: self
                .detections
                .iter()
                .map(|d| DetectionDocument {
                    label: d.label.clone(),
                    confidence: d.confidence,
                    bbox: d.bbox,
                })
                .collect(),
            calibration: self.calibration,
            simulated_latency_s: None,
        }
    }
}

fn canonical_order(a: &DetectionDocument, b: &DetectionDocument) -> Ordering {
    a.bbox
        .x
        .total_cmp(&b.bbox.x)
        .then(a.bbox.y.total_cmp(&b.bbox.y))
        .then_with(|| a.label.cmp(&b.label))
        .then(a.bbox.w.total_cmp(&b.bbox.w))
        .then(a.bbox.h.total_cmp(&b.bbox.h))
        .then(a.confidence.total_cmp(&b.confidence))
}

/// Validate a detector document and assign detection ids `<label>#<n>`,
/// numbered per label by ascending center-x.
pub fn ingest_scene(doc: &SceneDocument) -> Result<ScenePerception, SceneError> {
    if doc.width_px == 0 || doc.height_px == 0 {
        return Err(SceneError::Value("image dimensions must be positive".into()));
    }
    if let Some(c) = &doc.calibration {
        c.validate()?;
    }
    let (width, height) = (f64::from(doc.width_px), f64::from(doc.height_px));
    for (index, d) in doc.detections.iter().enumerate() {
        if d.label.trim().is_empty() {
            return Err(SceneError::Value(format!("detection {index} has an empty label")));
        }
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(SceneError::Value(format!(
                "confidence of detection {index} ({}) must lie in [0, 1], got {}",
                d.label, d.confidence
            )));
        }
        let b = &d.bbox;
        if !(b.x.is_finite() && b.y.is_finite() && b.w.is_finite() && b.h.is_finite()) {
            return Err(SceneError::Value(format!("box of detection {index} is not finite")));
        }
        if b.w <= 0.0 || b.h <= 0.0 {
            return Err(SceneError::Value(format!(
                "box of detection {index} must have positive width and height"
            )));
        }
        if !(0.0..=width).contains(&b.x) || !(0.0..=height).contains(&b.y) {
            return Err(SceneError::Bounds {
                index,
                label: d.label.clone(),
                width: doc.width_px,
                height: doc.height_px,
            });
        }
    }

    let mut sorted: Vec<&DetectionDocument> = doc.detections.iter().collect();
    sorted.sort_by(|a, b| canonical_order(a, b));

    let mut per_label: BTreeMap<&str, usize> = BTreeMap::new();
    let detections = sorted
        .into_iter()
        .map(|d| {
            let n = per_label.entry(d.label.as_str()).or_insert(0);
            *n += 1;
            Detection {
                id: format!("{}#{}", d.label, n),
                label: d.label.clone(),
                confidence: d.confidence,
                bbox: d.bbox,
            }
        })
        .collect();

    Ok(ScenePerception {
        image_id: doc.image_id.clone(),
        width_px: doc.width_px,
        height_px: doc.height_px,
        detections,
        calibration: doc.calibration,
    })
}

/// Parse and ingest a JSON detector document.
pub fn ingest_scene_json(text: &str) -> Result<ScenePerception, SceneError> {
    ingest_scene(&SceneDocument::from_json(text)?)
}

/// World-frame `subject - reference` in meters.
pub fn displacement(
    scene: &ScenePerception,
    subject: &Detection,
    reference: &Detection,
) -> Result<(f64, f64), SceneError> {
    let calib = scene
        .calibration
        .ok_or_else(|| SceneError::MissingCalibration(scene.image_id.clone()))?;
    let (sx, sy) = calib.to_world(subject.bbox.center());
    let (rx, ry) = calib.to_world(reference.bbox.center());
    Ok((sx - rx, sy - ry))
}
