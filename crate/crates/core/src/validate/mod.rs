//! Response validation: a response is accepted only when it passes both the
//! linguistic heuristics and the physics checks against scene facts.
//! Rejected responses feed a bounded revise-and-regenerate loop.

mod claims;
mod revision;

pub use claims::{extract_claims, Dimension, NumericClaim, Unit};
pub use revision::{validate_with_revision, Attempt, RevisionError, RevisionOutcome, DEFAULT_MAX_REVISIONS};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gateway::LlmResponse;
use crate::scene::Fact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    Empty,
    TooShort,
    TooLong,
    NonPrintable,
    NoTerminator,
    RefusalMarker,
    ValueMismatch,
    MissingDistanceClaim,
    NegativeLength,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Empty => "EMPTY",
            Self::TooShort => "TOO_SHORT",
            Self::TooLong => "TOO_LONG",
            Self::NonPrintable => "NON_PRINTABLE",
            Self::NoTerminator => "NO_TERMINATOR",
            Self::RefusalMarker => "REFUSAL_MARKER",
            Self::ValueMismatch => "VALUE_MISMATCH",
            Self::MissingDistanceClaim => "MISSING_DISTANCE_CLAIM",
            Self::NegativeLength => "NEGATIVE_LENGTH",
        }
    }

    /// The corrective instruction quoted back to the model on revision.
    pub fn instruction(self) -> &'static str {
        match self {
            Self::Empty => "Give a non-empty answer.",
            Self::TooShort => "Answer in at least one complete sentence.",
            Self::TooLong => "Keep the answer short enough to be spoken in a few seconds.",
            Self::NonPrintable => "Use plain printable text only.",
            Self::NoTerminator => "Finish the answer with a complete sentence.",
            Self::RefusalMarker => "Answer directly from the SCENE measurements instead of declining.",
            Self::ValueMismatch => "Only quote values that match the measurements in the SCENE section.",
            Self::MissingDistanceClaim => "State the distance as a number with a length unit.",
            Self::NegativeLength => "Report distances as non-negative magnitudes.",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reason {
    pub code: ReasonCode,
    pub detail: String,
}

impl Reason {
    fn new(code: ReasonCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }

    /// One line of revision feedback.
    pub fn feedback(&self) -> String {
        format!("{}: {}. {}", self.code, self.detail, self.code.instruction())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub heuristic_pass: bool,
    pub physics_pass: bool,
    pub accepted: bool,
    pub reasons: Vec<Reason>,
}

impl ValidationVerdict {
    pub fn new(heuristic: (bool, Vec<Reason>), physics: (bool, Vec<Reason>)) -> Self {
        let (heuristic_pass, mut reasons) = heuristic;
        let (physics_pass, more) = physics;
        reasons.extend(more);
        Self {
            heuristic_pass,
            physics_pass,
            accepted: heuristic_pass && physics_pass,
            reasons,
        }
    }

    pub fn codes(&self) -> Vec<ReasonCode> {
        self.reasons.iter().map(|r| r.code).collect()
    }

    pub fn feedback(&self) -> Vec<String> {
        self.reasons.iter().map(Reason::feedback).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    pub check_length: bool,
    pub min_chars: usize,
    pub max_chars: usize,
    pub check_printable: bool,
    pub min_printable_ratio: f64,
    pub require_terminator: bool,
    /// Case-insensitive substrings; an empty list disables the rule.
    pub refusal_markers: Vec<String>,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            check_length: true,
            min_chars: 20,
            max_chars: 1200,
            check_printable: true,
            min_printable_ratio: 0.95,
            require_terminator: true,
            refusal_markers: vec!["as an AI".to_string(), "I cannot see".to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    pub check_values: bool,
    pub relative_tolerance: f64,
    /// Absolute tolerance (base units) used when either side is zero.
    pub zero_tolerance: f64,
    pub require_distance_claim: bool,
    pub forbid_negative_lengths: bool,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            check_values: true,
            relative_tolerance: 0.05,
            zero_tolerance: 0.05,
            require_distance_claim: true,
            forbid_negative_lengths: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidatorConfig {
    pub heuristic: HeuristicConfig,
    pub physics: PhysicsConfig,
}

const NEAR_ZERO: f64 = 1e-9;

fn is_printable(c: char) -> bool {
    !c.is_control() || matches!(c, '\n' | '\r' | '\t')
}

pub fn heuristic_check_with(text: &str, cfg: &HeuristicConfig) -> (bool, Vec<Reason>) {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return (false, vec![Reason::new(ReasonCode::Empty, "response is blank")]);
    }
    let mut reasons = Vec::new();
    let n = trimmed.chars().count();
    if cfg.check_length && n < cfg.min_chars {
        reasons.push(Reason::new(
            ReasonCode::TooShort,
            format!("{n} characters, minimum is {}", cfg.min_chars),
        ));
    }
    if cfg.check_length && n > cfg.max_chars {
        reasons.push(Reason::new(
            ReasonCode::TooLong,
            format!("{n} characters, maximum is {}", cfg.max_chars),
        ));
    }
    if cfg.check_printable {
        let printable = trimmed.chars().filter(|&c| is_printable(c)).count();
        let ratio = printable as f64 / n as f64;
        if ratio < cfg.min_printable_ratio {
            reasons.push(Reason::new(
                ReasonCode::NonPrintable,
                format!("only {:.0}% of characters are printable", ratio * 100.0),
            ));
        }
    }
    if cfg.require_terminator {
        let tail = trimmed.trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}']);
        if !tail.ends_with(['.', '!', '?']) {
            reasons.push(Reason::new(
                ReasonCode::NoTerminator,
                "response does not end with '.', '!' or '?'",
            ));
        }
    }
    let lowered = trimmed.to_lowercase();
    for marker in &cfg.refusal_markers {
        if !marker.is_empty() && lowered.contains(&marker.to_lowercase()) {
            reasons.push(Reason::new(
                ReasonCode::RefusalMarker,
                format!("response contains {marker:?}"),
            ));
        }
    }
    (reasons.is_empty(), reasons)
}

pub fn heuristic_check(text: &str) -> (bool, Vec<Reason>) {
    heuristic_check_with(text, &HeuristicConfig::default())
}

/// Symmetric closeness test: relative to the larger magnitude, or absolute
/// when either value is (near) zero.
pub fn within_tolerance(a: f64, b: f64, cfg: &PhysicsConfig) -> bool {
    let diff = (a - b).abs();
    if a.abs().min(b.abs()) < NEAR_ZERO {
        diff <= cfg.zero_tolerance
    } else {
        diff <= cfg.relative_tolerance * a.abs().max(b.abs())
    }
}

struct TypedFact<'a> {
    fact: &'a Fact,
    dimension: Dimension,
    base: f64,
}

pub fn physics_check_with(text: &str, facts: &[Fact], question: &str, cfg: &PhysicsConfig) -> (bool, Vec<Reason>) {
    let claims = extract_claims(text);
    let typed: Vec<TypedFact> = facts
        .iter()
        .filter(|f| f.value.is_finite())
        .filter_map(|f| {
            let unit = Unit::parse(&f.unit)?;
            Some(TypedFact {
                fact: f,
                dimension: unit.dimension()?,
                base: f.value * unit.to_base(),
            })
        })
        .collect();

    let mut reasons = Vec::new();
    if cfg.check_values {
        for claim in &claims {
            let Some(dim) = claim.dimension() else {
                continue;
            };
            let candidates: Vec<&TypedFact> = typed.iter().filter(|t| t.dimension == dim).collect();
            if candidates.is_empty() {
                continue;
            }
            let value = claim.base_value();
            if !candidates.iter().any(|t| within_tolerance(value, t.base, cfg)) {
                let closest = candidates
                    .iter()
                    .min_by(|a, b| (a.base - value).abs().total_cmp(&(b.base - value).abs()))
                    .map(|t| format!(" (closest is {} = {} {})", t.fact.name, t.fact.value, t.fact.unit))
                    .unwrap_or_default();
                reasons.push(Reason::new(
                    ReasonCode::ValueMismatch,
                    format!(
                        "claimed {} {} matches no measured value{closest}",
                        claim.value,
                        claim.unit.as_str()
                    ),
                ));
            }
        }
    }
    let lengths: Vec<&NumericClaim> = claims
        .iter()
        .filter(|c| c.dimension() == Some(Dimension::Length))
        .collect();
    if cfg.require_distance_claim && question.to_lowercase().contains("distance") && lengths.is_empty() {
        reasons.push(Reason::new(
            ReasonCode::MissingDistanceClaim,
            "the question asks for a distance but the answer states no length",
        ));
    }
    if cfg.forbid_negative_lengths {
        for c in lengths.iter().filter(|c| c.value < 0.0) {
            reasons.push(Reason::new(
                ReasonCode::NegativeLength,
                format!("claimed length {} {} is negative", c.value, c.unit.as_str()),
            ));
        }
    }
    (reasons.is_empty(), reasons)
}

pub fn physics_check(text: &str, facts: &[Fact], question: &str) -> (bool, Vec<Reason>) {
    physics_check_with(text, facts, question, &PhysicsConfig::default())
}

pub fn validate_with(
    response: &LlmResponse,
    facts: &[Fact],
    question: &str,
    cfg: &ValidatorConfig,
) -> ValidationVerdict {
    ValidationVerdict::new(
        heuristic_check_with(&response.text, &cfg.heuristic),
        physics_check_with(&response.text, facts, question, &cfg.physics),
    )
}

pub fn validate(response: &LlmResponse, facts: &[Fact], question: &str) -> ValidationVerdict {
    validate_with(response, facts, question, &ValidatorConfig::default())
}
