use super::{Detection, SceneError, ScenePerception};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Qualifier {
    Left,
    Right,
    Top,
    Bottom,
}

impl Qualifier {
    fn from_word(word: &str) -> Option<Self> {
        match word {
            "left" | "leftmost" => Some(Self::Left),
            "right" | "rightmost" => Some(Self::Right),
            "top" | "topmost" | "upper" => Some(Self::Top),
            "bottom" | "bottommost" | "lower" => Some(Self::Bottom),
            _ => None,
        }
    }
}

/// Resolve a phrase such as "the right ball" to one detection.
///
/// Detections whose label occurs in the phrase are candidates. The first
/// positional word (left/right/top/bottom) picks the extreme candidate by
/// center-x or image row; a phrase with no positional word must match exactly
/// one detection.
pub fn resolve_referent<'a>(phrase: &str, scene: &'a ScenePerception) -> Result<&'a Detection, SceneError> {
    let lowered = phrase.to_lowercase();
    let candidates: Vec<&Detection> = scene
        .detections
        .iter()
        .filter(|d| lowered.contains(&d.label.to_lowercase()))
        .collect();
    if candidates.is_empty() {
        return Err(SceneError::NoMatch(phrase.to_string()));
    }

    let qualifier = lowered
        .split(|c: char| !c.is_alphanumeric())
        .find_map(Qualifier::from_word);

    // Detections are already in canonical order, so `min_by`/`max_by` ties
    // resolve the same way for every detector output order.
    let pick = match qualifier {
        Some(Qualifier::Right) => candidates
            .iter()
            .copied()
            .rev()
            .max_by(|a, b| a.bbox.x.total_cmp(&b.bbox.x)),
        Some(Qualifier::Left) => candidates.iter().copied().min_by(|a, b| a.bbox.x.total_cmp(&b.bbox.x)),
        Some(Qualifier::Top) => candidates.iter().copied().min_by(|a, b| a.bbox.y.total_cmp(&b.bbox.y)),
        Some(Qualifier::Bottom) => candidates
            .iter()
            .copied()
            .rev()
            .max_by(|a, b| a.bbox.y.total_cmp(&b.bbox.y)),
        None if candidates.len() == 1 => Some(candidates[0]),
        None => {
            return Err(SceneError::AmbiguousReferent {
                phrase: phrase.to_string(),
                count: candidates.len(),
            })
        }
    };
    pick.ok_or_else(|| SceneError::NoMatch(phrase.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ingest_scene, BoundingBox, DetectionDocument, SceneDocument};

    fn scene(points: &[(&str, f64, f64)]) -> ScenePerception {
        ingest_scene(&SceneDocument {
            image_id: "s".into(),
            width_px: 640,
            height_px: 480,
            detections: points
                .iter()
                .map(|&(label, x, y)| DetectionDocument {
                    label: label.into(),
                    confidence: 0.9,
                    bbox: BoundingBox { x, y, w: 20.0, h: 20.0 },
                })
                .collect(),
            calibration: None,
            simulated_latency_s: None,
        })
        .unwrap()
    }

    #[test]
    fn right_and_left_ball() {
        let s = scene(&[("ball", 120.0, 300.0), ("ball", 420.0, 300.0)]);
        assert_eq!(resolve_referent("right ball", &s).unwrap().bbox.x, 420.0);
        assert_eq!(resolve_referent("the left ball", &s).unwrap().bbox.x, 120.0);
        assert_eq!(
            resolve_referent("What is the horizontal distance traveled by the right ball?", &s)
                .unwrap()
                .id,
            "ball#2"
        );
    }

    #[test]
    fn top_and_bottom_use_image_rows() {
        let s = scene(&[("ball", 120.0, 100.0), ("ball", 420.0, 400.0)]);
        assert_eq!(resolve_referent("top ball", &s).unwrap().bbox.y, 100.0);
        assert_eq!(resolve_referent("bottom ball", &s).unwrap().bbox.y, 400.0);
    }

    #[test]
    fn unqualified_phrase() {
        let s = scene(&[("ball", 120.0, 300.0), ("ball", 420.0, 300.0), ("ramp", 50.0, 400.0)]);
        assert!(matches!(
            resolve_referent("ball", &s),
            Err(SceneError::AmbiguousReferent { count: 2, .. })
        ));
        assert_eq!(resolve_referent("the ramp", &s).unwrap().id, "ramp#1");
        assert!(matches!(resolve_referent("the cart", &s), Err(SceneError::NoMatch(_))));
    }

    #[test]
    fn qualifier_words_are_whole_words() {
        // "bright" must not read as "right".
        let s = scene(&[("ball", 120.0, 300.0), ("ball", 420.0, 300.0)]);
        assert!(resolve_referent("the bright ball", &s).is_err());
    }
}
