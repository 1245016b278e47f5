use serde::{Deserialize, Serialize};

use super::ScenePerception;

/// Bumped whenever the caption wording changes. `+conf` marks that detector
/// confidences are part of the text.
pub const CAPTION_TEMPLATE_VERSION: &str = "scene-caption/1+conf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

impl Fact {
    fn new(name: String, value: f64, unit: &str) -> Self {
        Self {
            name,
            value,
            unit: unit.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub facts: Vec<Fact>,
}

const ORDINALS: [&str; 10] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

fn ordinal(n: usize) -> String {
    match ORDINALS.get(n - 1) {
        Some(word) => (*word).to_string(),
        None => {
            let suffix = match (n % 10, n % 100) {
                (1, r) if r != 11 => "st",
                (2, r) if r != 12 => "nd",
                (3, r) if r != 13 => "rd",
                _ => "th",
            };
            format!("{n}{suffix}")
        }
    }
}

/// Two-decimal display value without a "-0.00".
pub(crate) fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Render the scene as caption text plus the facts behind every number in it.
///
/// Objects are listed left to right, then every pair of same-label objects
/// gets its horizontal and vertical separation. Without calibration all
/// positions stay in pixels.
pub fn caption(scene: &ScenePerception) -> Caption {
    if scene.detections.is_empty() {
        return Caption {
            text: "No objects detected.".to_string(),
            facts: Vec::new(),
        };
    }

    let (unit, frame) = match scene.calibration {
        Some(c) if c.y_up => (
            "m",
            "positions in meters from the calibration origin, x to the right and y upward",
        ),
        Some(_) => (
            "m",
            "positions in meters from the calibration origin, x to the right and y downward",
        ),
        None => ("px", "positions in image pixels, x to the right and y downward"),
    };
    let position = |d: &super::Detection| match scene.calibration {
        Some(c) => c.to_world(d.bbox.center()),
        None => d.bbox.center(),
    };

    let mut lines = vec![format!("Detected objects ordered left to right ({frame}):")];
    let mut facts = Vec::new();
    for (i, d) in scene.detections.iter().enumerate() {
        let (x, y) = position(d);
        lines.push(format!(
            "{} object: {} ({}) at ({}, {}) {} [confidence {}]",
            ordinal(i + 1),
            d.label,
            d.id,
            fmt2(x),
            fmt2(y),
            unit,
            fmt2(d.confidence)
        ));
        facts.push(Fact::new(format!("x({})", d.id), x, unit));
        facts.push(Fact::new(format!("y({})", d.id), y, unit));
        facts.push(Fact::new(format!("confidence({})", d.id), d.confidence, "unitless"));
    }

    let mut pair_lines = Vec::new();
    for (i, a) in scene.detections.iter().enumerate() {
        for b in scene.detections[i + 1..].iter().filter(|b| b.label == a.label) {
            let (ax, ay) = position(a);
            let (bx, by) = position(b);
            let (h, v) = ((bx - ax).abs(), (by - ay).abs());
            pair_lines.push(format!(
                "{} to {}: horizontal separation {} {unit}, vertical separation {} {unit}",
                a.id,
                b.id,
                fmt2(h),
                fmt2(v)
            ));
            facts.push(Fact::new(format!("horizontal_separation({},{})", a.id, b.id), h, unit));
            facts.push(Fact::new(format!("vertical_separation({},{})", a.id, b.id), v, unit));
        }
    }
    if !pair_lines.is_empty() {
        lines.push("Separations between objects with the same label:".to_string());
        lines.extend(pair_lines);
    }

    Caption {
        text: lines.join("\n"),
        facts,
    }
}
