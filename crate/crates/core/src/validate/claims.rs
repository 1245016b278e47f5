use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Length,
    Time,
    Mass,
    Velocity,
    Acceleration,
    Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "m")]
    Meter,
    #[serde(rename = "cm")]
    Centimeter,
    #[serde(rename = "s")]
    Second,
    #[serde(rename = "kg")]
    Kilogram,
    #[serde(rename = "m/s")]
    MeterPerSecond,
    #[serde(rename = "m/s^2")]
    MeterPerSecondSquared,
    #[serde(rename = "px")]
    Pixel,
    #[serde(rename = "unitless")]
    Unitless,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Meter => "m",
            Self::Centimeter => "cm",
            Self::Second => "s",
            Self::Kilogram => "kg",
            Self::MeterPerSecond => "m/s",
            Self::MeterPerSecondSquared => "m/s^2",
            Self::Pixel => "px",
            Self::Unitless => "unitless",
        }
    }

    pub fn dimension(self) -> Option<Dimension> {
        match self {
            Self::Meter | Self::Centimeter => Some(Dimension::Length),
            Self::Second => Some(Dimension::Time),
            Self::Kilogram => Some(Dimension::Mass),
            Self::MeterPerSecond => Some(Dimension::Velocity),
            Self::MeterPerSecondSquared => Some(Dimension::Acceleration),
            Self::Pixel => Some(Dimension::Pixel),
            Self::Unitless => None,
        }
    }

    /// Multiplier to the SI base unit of the dimension.
    pub fn to_base(self) -> f64 {
        match self {
            Self::Centimeter => 0.01,
            _ => 1.0,
        }
    }

    /// Parse a normalized unit string as used in scene facts.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        SYNONYMS
            .iter()
            .find(|(name, _)| name.eq_ignore_ascii_case(s))
            .map(|&(_, u)| u)
            .or(match s {
                "unitless" | "" => Some(Self::Unitless),
                _ => None,
            })
    }
}

/// Longest spellings first so "m/s^2" wins over "m/s" and "m".
const SYNONYMS: &[(&str, Unit)] = &[
    ("meters per second squared", Unit::MeterPerSecondSquared),
    ("metres per second squared", Unit::MeterPerSecondSquared),
    ("meters per second per second", Unit::MeterPerSecondSquared),
    ("meters per second", Unit::MeterPerSecond),
    ("metres per second", Unit::MeterPerSecond),
    ("centimeters", Unit::Centimeter),
    ("centimetres", Unit::Centimeter),
    ("centimeter", Unit::Centimeter),
    ("centimetre", Unit::Centimeter),
    ("kilograms", Unit::Kilogram),
    ("kilogram", Unit::Kilogram),
    ("seconds", Unit::Second),
    ("second", Unit::Second),
    ("meters", Unit::Meter),
    ("metres", Unit::Meter),
    ("meter", Unit::Meter),
    ("metre", Unit::Meter),
    ("pixels", Unit::Pixel),
    ("pixel", Unit::Pixel),
    ("m/s^2", Unit::MeterPerSecondSquared),
    ("m/s²", Unit::MeterPerSecondSquared),
    ("m/s2", Unit::MeterPerSecondSquared),
    ("secs", Unit::Second),
    ("sec", Unit::Second),
    ("m/s", Unit::MeterPerSecond),
    ("cm", Unit::Centimeter),
    ("kg", Unit::Kilogram),
    ("px", Unit::Pixel),
    ("m", Unit::Meter),
    ("s", Unit::Second),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericClaim {
    pub value: f64,
    pub unit: Unit,
    /// Byte range of the number and its unit in the response text.
    pub span: Range<usize>,
}

impl NumericClaim {
    pub fn base_value(&self) -> f64 {
        self.value * self.unit.to_base()
    }

    pub fn dimension(&self) -> Option<Dimension> {
        self.unit.dimension()
    }
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[-\u{2212}]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|[-\u{2212}]?\.\d+").expect("static regex")
    })
}

/// Characters that glue a digit to an identifier ("ball#2", "Q1", "m/s^2").
fn attaches(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '#' | '_' | '.' | '^' | '/' | '-' | '\u{2212}')
}

fn match_unit(rest: &str) -> Option<(Unit, usize)> {
    SYNONYMS.iter().find_map(|&(name, unit)| {
        let head = rest.get(..name.len())?;
        if !head.eq_ignore_ascii_case(name) {
            return None;
        }
        let boundary = rest[name.len()..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        boundary.then_some((unit, name.len()))
    })
}

/// Extract "number unit" occurrences. A number with no recognized unit is
/// reported as unitless. Spans are disjoint and ascending.
pub fn extract_claims(text: &str) -> Vec<NumericClaim> {
    let mut claims = Vec::new();
    let mut pos = 0;
    while let Some(m) = number_re().find_at(text, pos) {
        pos = m.end();
        let preceding = text[..m.start()].chars().next_back();
        let signed = m.as_str().starts_with(['-', '\u{2212}']);
        // A sign glued to a word is a hyphen ("Q-3"), not a minus.
        let (start, raw) = match preceding {
            Some(c) if signed && c.is_alphanumeric() => continue,
            Some(c) if !signed && attaches(c) => continue,
            _ => (m.start(), m.as_str()),
        };
        if text[m.end()..].starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        let cleaned: String = raw.replace('\u{2212}', "-").chars().filter(|&c| c != ',').collect();
        let Ok(value) = cleaned.parse::<f64>() else {
            continue;
        };
        if !value.is_finite() {
            continue;
        }

        let after = &text[m.end()..];
        let gap = after.len() - after.trim_start_matches([' ', '\u{a0}']).len();
        let gap = if gap == 0 && after.starts_with('-') { 1 } else { gap };
        let (unit, end) = match match_unit(&after[gap..]) {
            Some((unit, len)) => (unit, m.end() + gap + len),
            None => (Unit::Unitless, m.end()),
        };
        pos = end;
        claims.push(NumericClaim {
            value,
            unit,
            span: start..end,
        });
    }
    claims
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> Vec<(f64, &'static str)> {
        extract_claims(text)
            .into_iter()
            .map(|c| (c.value, c.unit.as_str()))
            .collect()
    }

    #[test]
    fn meters_and_seconds() {
        assert_eq!(
            pairs("travels 3.00 meters in 0.5 seconds"),
            vec![(3.0, "m"), (0.5, "s")]
        );
    }

    #[test]
    fn no_numbers() {
        assert!(extract_claims("no numbers here").is_empty());
    }

    #[test]
    fn centimeters_normalize_to_meters() {
        let c = extract_claims("300 cm");
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].value, c[0].unit), (300.0, Unit::Centimeter));
        assert!((c[0].base_value() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn compound_units_and_synonyms() {
        assert_eq!(
            pairs("g is 9.8 m/s^2, speed 2 m/s, mass 0.5 kg, waited 2 sec"),
            vec![(9.8, "m/s^2"), (2.0, "m/s"), (0.5, "kg"), (2.0, "s")]
        );
        assert_eq!(pairs("9.8 meters per second squared"), vec![(9.8, "m/s^2")]);
        assert_eq!(pairs("a 3-meter ramp"), vec![(3.0, "m")]);
    }

    #[test]
    fn unit_needs_word_boundary() {
        assert_eq!(pairs("3 minutes"), vec![(3.0, "unitless")]);
        assert_eq!(pairs("2 balls"), vec![(2.0, "unitless")]);
    }

    #[test]
    fn identifiers_are_not_numbers() {
        assert!(extract_claims("ball#2 and Q1 and x2").is_empty());
    }

    #[test]
    fn negatives_and_thousands() {
        assert_eq!(pairs("moved -2 m"), vec![(-2.0, "m")]);
        assert_eq!(pairs("about 1,200 m"), vec![(1200.0, "m")]);
        assert_eq!(pairs("−0.5 m"), vec![(-0.5, "m")]);
    }

    #[test]
    fn spans_cover_number_and_unit() {
        let text = "distance 3.00 meters.";
        let c = extract_claims(text);
        assert_eq!(&text[c[0].span.clone()], "3.00 meters");
    }

    #[test]
    fn fact_units_parse() {
        assert_eq!(Unit::parse("m"), Some(Unit::Meter));
        assert_eq!(Unit::parse("px"), Some(Unit::Pixel));
        assert_eq!(Unit::parse("unitless"), Some(Unit::Unitless));
        assert_eq!(Unit::parse("furlong"), None);
    }
}
