//! Turn orchestration: gate, transcribe, perceive, caption, prompt, generate,
//! validate and revise, speak, log.

mod config;
mod log;
mod service;

pub use config::{BackendConfig, ClockMode, DetectorConfig, ServiceConfig, DEFAULT_CREDENTIAL_ENV};
pub use log::{append_record, read_log};
pub use service::{replay, Assistant, UNVERIFIED_NOTICE};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::LlmResponse;
use crate::prompt::PromptRecord;
use crate::scene::{Caption, SceneDocument, ScenePerception};
use crate::speech::{AudioRef, Transcript};
use crate::validate::ValidationVerdict;

pub const TURN_SCHEMA_VERSION: &str = "turn-record/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Asr,
    Perception,
    Caption,
    Prompt,
    Generation,
    Validation,
    Speech,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Asr => "asr",
            Self::Perception => "perception",
            Self::Caption => "caption",
            Self::Prompt => "prompt",
            Self::Generation => "generation",
            Self::Validation => "validation",
            Self::Speech => "speech",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum AssistantError {
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("session {0} already has a turn in flight")]
    SessionBusy(String),
    #[error("utterance does not start with the wake phrase")]
    NotTriggered,
    #[error("invalid turn input: {0}")]
    InvalidInput(String),
    #[error("{stage} stage failed: {message}")]
    Stage {
        stage: Stage,
        message: String,
        /// The failed turn as it was logged.
        record: Box<TurnRecord>,
    },
    #[error("log write failed: {0}")]
    Log(String),
    #[error("log line {line} does not parse: {message}")]
    Parse { line: usize, message: String },
    #[error("configuration: {0}")]
    Config(String),
}

impl AssistantError {
    /// Stable machine-readable code for API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Self::SessionNotFound(_) => "SESSION_NOT_FOUND",
            Self::SessionBusy(_) => "SESSION_BUSY",
            Self::NotTriggered => "NOT_TRIGGERED",
            Self::InvalidInput(_) => "INVALID_INPUT",
            Self::Stage { .. } => "STAGE_FAILED",
            Self::Log(_) => "LOG_ERROR",
            Self::Parse { .. } => "PARSE_ERROR",
            Self::Config(_) => "CONFIG_ERROR",
        }
    }
}

/// One turn's input. Exactly one of `utterance`/`audio_uri` and exactly one
/// of `scene`/`scene_fixture`/`image_ref` must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
}

impl TurnInput {
    pub fn text(utterance: impl Into<String>) -> Self {
        Self {
            utterance: Some(utterance.into()),
            ..Default::default()
        }
    }

    pub fn with_fixture(mut self, name: impl Into<String>) -> Self {
        self.scene_fixture = Some(name.into());
        self
    }

    pub fn with_scene(mut self, doc: SceneDocument) -> Self {
        self.scene = Some(doc);
        self
    }

    pub fn with_question_id(mut self, id: impl Into<String>) -> Self {
        self.question_id = Some(id.into());
        self
    }

    pub fn check(&self) -> Result<(), AssistantError> {
        let speech = usize::from(self.utterance.is_some()) + usize::from(self.audio_uri.is_some());
        if speech != 1 {
            return Err(AssistantError::InvalidInput(
                "give exactly one of utterance or audio_uri".into(),
            ));
        }
        let scene = usize::from(self.scene.is_some())
            + usize::from(self.scene_fixture.is_some())
            + usize::from(self.image_ref.is_some());
        if scene != 1 {
            return Err(AssistantError::InvalidInput(
                "give exactly one of scene, scene_fixture or image_ref".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub perception_s: f64,
    pub llm_s: f64,
    pub validation_s: f64,
    pub speech_s: f64,
    pub total_s: f64,
}

impl LatencyBreakdown {
    pub fn stage_sum(&self) -> f64 {
        self.perception_s + self.llm_s + self.validation_s + self.speech_s
    }

    /// Perception plus generation: the two components the evaluation tables
    /// break response time into.
    pub fn reported_total(&self) -> f64 {
        self.perception_s + self.llm_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnFailure {
    pub stage: Stage,
    pub message: String,
}

/// Append-only audit record of one turn.
///
/// For completed turns `prompts`, `responses` and `verdicts` have equal,
/// non-zero length. A turn that failed during generation also carries the
/// prompt whose generation failed, so `prompts` is one longer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub schema_version: String,
    pub session_id: String,
    pub turn_id: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    pub input: TurnInput,
    pub transcript: Option<Transcript>,
    pub question: String,
    pub scene: Option<ScenePerception>,
    pub caption: Option<Caption>,
    pub prompts: Vec<PromptRecord>,
    pub responses: Vec<LlmResponse>,
    pub verdicts: Vec<ValidationVerdict>,
    pub accepted: bool,
    pub exhausted: bool,
    /// The validated answer; absent unless accepted.
    pub answer: Option<String>,
    /// What was actually spoken to the student.
    pub spoken_text: Option<String>,
    pub spoken: Option<AudioRef>,
    pub latency: LatencyBreakdown,
    pub template_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnFailure>,
}

impl TurnRecord {
    pub fn revisions(&self) -> usize {
        self.responses.len().saturating_sub(1)
    }

    pub fn rendered_prompts(&self) -> Vec<&str> {
        self.prompts.iter().map(|p| p.rendered.as_str()).collect()
    }
}

/// One step of a scripted session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub question_id: String,
    pub utterance: String,
    pub scene_fixture: String,
}

impl ScriptStep {
    pub fn input(&self) -> TurnInput {
        TurnInput::text(&self.utterance)
            .with_fixture(&self.scene_fixture)
            .with_question_id(&self.question_id)
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptStep>, AssistantError> {
    serde_json::from_str(text).map_err(|e| AssistantError::InvalidInput(format!("script: {e}")))
}

pub fn bundled_script() -> Vec<ScriptStep> {
    parse_script(crate::fixtures::PROJECTILE_SCRIPT).expect("bundled script parses")
}
