use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, GatewayError, GenerationParams};
use crate::clock::{secs, Clock};
use crate::prompt::Prompt;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    #[default]
    Transient,
    Rejected,
}

/// What the mock answers for one matched question (or the fallback).
///
/// `texts` scripts successive answers to the same question (the last one
/// repeats); `text` is shorthand for a single answer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioReply {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub texts: Vec<String>,
    pub latency_s: f64,
    pub fail_first_n: u32,
    pub failure: FailureKind,
}

impl ScenarioReply {
    fn answers(&self) -> Vec<String> {
        let mut out: Vec<String> = self.text.iter().cloned().collect();
        out.extend(self.texts.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub match_question: String,
    #[serde(flatten)]
    pub reply: ScenarioReply,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub entries: Vec<ScenarioEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<ScenarioReply>,
}

#[derive(Debug, Default, Clone, Copy)]
struct ReplyState {
    calls: u32,
    answered: usize,
}

/// Deterministic backend driven by a scenario file.
#[derive(Debug)]
pub struct MockBackend {
    id: String,
    scenario: Scenario,
    /// One slot per entry, plus the fallback at the end.
    state: Mutex<Vec<ReplyState>>,
}

impl MockBackend {
    pub fn new(scenario: Scenario) -> Result<Self, GatewayError> {
        let replies = scenario
            .entries
            .iter()
            .map(|e| (e.match_question.as_str(), &e.reply))
            .chain(scenario.fallback.as_ref().map(|f| ("<fallback>", f)));
        for (q, r) in replies {
            if r.answers().is_empty() {
                return Err(GatewayError::Scenario(format!("reply for {q:?} has no text")));
            }
            if !(r.latency_s.is_finite() && r.latency_s >= 0.0) {
                return Err(GatewayError::Scenario(format!("reply for {q:?} has a bad latency")));
            }
        }
        let slots = scenario.entries.len() + 1;
        Ok(Self {
            id: "mock".to_string(),
            scenario,
            state: Mutex::new(vec![ReplyState::default(); slots]),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| GatewayError::Scenario(e.to_string()))?;
        Self::new(scenario)
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn select(&self, question: &str) -> Option<(usize, &ScenarioReply)> {
        let q = question.trim();
        self.scenario
            .entries
            .iter()
            .position(|e| e.match_question.trim() == q)
            .map(|i| (i, &self.scenario.entries[i].reply))
            .or_else(|| {
                self.scenario
                    .fallback
                    .as_ref()
                    .map(|f| (self.scenario.entries.len(), f))
            })
    }
}

impl ChatBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &Prompt, _params: &GenerationParams, clock: &dyn Clock) -> Result<String, BackendError> {
        let (slot, reply) = self
            .select(prompt.question())
            .ok_or_else(|| BackendError::Rejected(format!("no scenario entry for {:?}", prompt.question())))?;
        let answer = {
            let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
            let s = &mut state[slot];
            s.calls += 1;
            if s.calls <= reply.fail_first_n {
                let msg = format!("scripted failure {} of {}", s.calls, reply.fail_first_n);
                return Err(match reply.failure {
                    FailureKind::Transient => BackendError::Transient(msg),
                    FailureKind::Rejected => BackendError::Rejected(msg),
                });
            }
            let answers = reply.answers();
            let text = answers[s.answered.min(answers.len() - 1)].clone();
            s.answered += 1;
            text
        };
        clock.simulate(secs(reply.latency_s));
        Ok(answer)
    }
}
