use serde::{Deserialize, Serialize};

use super::{validate_with, ValidationVerdict, ValidatorConfig};
use crate::clock::Clock;
use crate::gateway::{Gateway, GatewayError, GenerationParams, LlmResponse};
use crate::prompt::{build_revision_prompt, Prompt, PromptError, PromptRecord};
use crate::scene::Fact;

pub const DEFAULT_MAX_REVISIONS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub prompt: PromptRecord,
    pub response: LlmResponse,
    pub verdict: ValidationVerdict,
    /// Wall time spent validating this response.
    pub validation_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionOutcome {
    /// Never empty; the last element holds the final response.
    pub attempts: Vec<Attempt>,
    pub exhausted: bool,
}

impl RevisionOutcome {
    pub fn final_attempt(&self) -> &Attempt {
        self.attempts.last().expect("at least one attempt")
    }

    pub fn final_response(&self) -> &LlmResponse {
        &self.final_attempt().response
    }

    pub fn verdict(&self) -> &ValidationVerdict {
        &self.final_attempt().verdict
    }

    pub fn revisions(&self) -> usize {
        self.attempts.len() - 1
    }

    pub fn accepted(&self) -> bool {
        self.verdict().accepted
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RevisionError {
    #[error("generation failed after {} validated attempt(s): {error}", attempts.len())]
    Gateway {
        error: GatewayError,
        /// Attempts that completed before the failure; the failed prompt is
        /// in `pending_prompt`.
        attempts: Vec<Attempt>,
        pending_prompt: Box<PromptRecord>,
    },
    #[error("could not build revision prompt: {error}")]
    Prompt { error: PromptError, attempts: Vec<Attempt> },
}

impl RevisionError {
    pub fn attempts(&self) -> &[Attempt] {
        match self {
            Self::Gateway { attempts, .. } | Self::Prompt { attempts, .. } => attempts,
        }
    }
}

/// Generate, validate and, while rejected, regenerate from a revision prompt
/// carrying the failure reasons. At most `max_revisions` regenerations run.
#[allow(clippy::too_many_arguments)]
pub fn validate_with_revision(
    gateway: &Gateway,
    prompt: &Prompt,
    params: &GenerationParams,
    facts: &[Fact],
    question: &str,
    max_revisions: u32,
    clock: &dyn Clock,
    config: &ValidatorConfig,
) -> Result<RevisionOutcome, RevisionError> {
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut current = prompt.clone();
    loop {
        let response = match gateway.generate(&current, params, clock) {
            Ok(r) => r,
            Err(error) => {
                return Err(RevisionError::Gateway {
                    error,
                    attempts,
                    pending_prompt: Box::new(current.record()),
                })
            }
        };
        let t0 = clock.now();
        let verdict = validate_with(&response, facts, question, config);
        let validation_s = (clock.now() - t0).as_secs_f64();
        let accepted = verdict.accepted;
        let feedback = verdict.feedback();
        let rejected_text = response.text.clone();
        attempts.push(Attempt {
            prompt: current.record(),
            response,
            verdict,
            validation_s,
        });
        if accepted {
            return Ok(RevisionOutcome {
                attempts,
                exhausted: false,
            });
        }
        if attempts.len() > max_revisions as usize {
            return Ok(RevisionOutcome {
                attempts,
                exhausted: true,
            });
        }
        current = match build_revision_prompt(&current, &rejected_text, &feedback) {
            Ok(p) => p,
            Err(error) => return Err(RevisionError::Prompt { error, attempts }),
        };
    }
}
