//! Chat-backend gateway: one `generate` call per prompt, with retries on
//! transient failures and wall-clock (or simulated) latency capture.

mod mock;
mod remote;

pub use mock::{FailureKind, MockBackend, Scenario, ScenarioEntry, ScenarioReply};
pub use remote::RemoteBackend;

use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::prompt::Prompt;

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("credential variable {0} is not set")]
    CredentialMissing(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("backend gave no usable answer after {attempts} attempts (last error: {last})")]
    BackendTimeout { attempts: u32, last: String },
    #[error("backend rejected the request: {0}")]
    BackendRejected(String),
    #[error("backend returned a blank completion")]
    EmptyCompletion,
    #[error("credential variable {0} is not set")]
    CredentialMissing(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("scenario error: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub model_name: String,
    pub max_output_chars: usize,
    pub temperature: f64,
    /// Per-attempt timeout in seconds.
    pub timeout: f64,
    pub max_retries: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_name: "gpt-3.5-turbo".to_string(),
            max_output_chars: 2000,
            temperature: 0.0,
            timeout: 30.0,
            max_retries: 2,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(GatewayError::InvalidParams("timeout must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::InvalidParams("temperature must be >= 0".into()));
        }
        if self.max_output_chars == 0 {
            return Err(GatewayError::InvalidParams("max_output_chars must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout_duration(&self) -> Duration {
        Duration::from_secs_f64(self.timeout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub backend_id: String,
    /// Seconds from the first attempt to the successful answer, including
    /// failed attempts and backoff.
    pub latency: f64,
    /// 1-based attempt that succeeded.
    pub attempt: u32,
    pub truncated: bool,
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, prompt: &Prompt, params: &GenerationParams, clock: &dyn Clock) -> Result<String, BackendError>;
}

/// Exponential backoff with full jitter: the wait before retry `k` (0-based)
/// is uniform in `[0, base * factor^k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(250),
            factor: 2.0,
            cap: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    pub fn ceiling(&self, retry: u32) -> Duration {
        let scale = self.factor.powi(i32::try_from(retry).unwrap_or(i32::MAX));
        let secs = self.base.as_secs_f64() * scale;
        if secs.is_finite() && secs < self.cap.as_secs_f64() {
            Duration::from_secs_f64(secs)
        } else {
            self.cap
        }
    }

    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        self.ceiling(retry).mul_f64(rng.random::<f64>())
    }
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    backoff: Backoff,
    seed: u64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("backoff", &self.backoff)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            backoff: Backoff::default(),
            seed: 0x5eed,
        }
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// Jitter depends only on the seed and the prompt, so concurrent sessions
    /// cannot perturb each other's backoff sequence.
    fn jitter_rng(&self, prompt: &Prompt) -> StdRng {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        prompt.rendered().hash(&mut h);
        StdRng::seed_from_u64(self.seed ^ h.finish())
    }

    pub fn generate(
        &self,
        prompt: &Prompt,
        params: &GenerationParams,
        clock: &dyn Clock,
    ) -> Result<LlmResponse, GatewayError> {
        if prompt.rendered().trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        params.validate()?;
        let mut rng = self.jitter_rng(prompt);
        let start = clock.now();
        let attempts = params.max_retries.saturating_add(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.backend.complete(prompt, params, clock) {
                Ok(raw) => {
                    if raw.trim().is_empty() {
                        return Err(GatewayError::EmptyCompletion);
                    }
                    let truncated = raw.chars().count() > params.max_output_chars;
                    let text = if truncated {
                        raw.chars().take(params.max_output_chars).collect()
                    } else {
                        raw
                    };
                    return Ok(LlmResponse {
                        text,
                        backend_id: self.backend.id().to_string(),
                        latency: (clock.now() - start).as_secs_f64(),
                        attempt,
                        truncated,
                    });
                }
                Err(BackendError::Transient(e)) => {
                    last = e;
                    if attempt < attempts {
                        clock.sleep(self.backoff.delay(attempt - 1, &mut rng));
                    }
                }
                Err(BackendError::Rejected(e)) => return Err(GatewayError::BackendRejected(e)),
                Err(BackendError::CredentialMissing(v)) => return Err(GatewayError::CredentialMissing(v)),
            }
        }
        Err(GatewayError::BackendTimeout { attempts, last })
    }
}

/// Free-function form of [`Gateway::generate`].
pub fn generate(
    gateway: &Gateway,
    prompt: &Prompt,
    params: &GenerationParams,
    clock: &dyn Clock,
) -> Result<LlmResponse, GatewayError> {
    gateway.generate(prompt, params, clock)
}
