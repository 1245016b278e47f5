use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, TryLockError};
use std::time::Duration;

use chrono::Utc;

use super::{
    append_record, read_log, AssistantError, BackendConfig, ClockMode, DetectorConfig, LatencyBreakdown, ServiceConfig,
    Stage, TurnFailure, TurnInput, TurnRecord, TURN_SCHEMA_VERSION,
};
use crate::clock::{secs, Clock, RealClock, SimulatedClock};
use crate::gateway::{ChatBackend, Gateway, MockBackend, RemoteBackend};
use crate::prompt::{build_prompt_with_notes, ContextStore};
use crate::scene::{
    caption, ingest_scene, resolve_referent, Detector, FixtureDetector, ImageRef, RemoteDetector, SceneDocument,
    ScenePerception, CAPTION_TEMPLATE_VERSION,
};
use crate::speech::{wake_gate, AudioRef, FixtureAsr, FixtureTts, SpeechRecognizer, SpeechSynthesizer};
use crate::validate::{validate_with_revision, RevisionError};

/// Spoken instead of an answer that never passed validation.
pub const UNVERIFIED_NOTICE: &str =
    "I could not check my answer against the measurements, so I will not guess. Please ask your teacher or try asking again.";

#[derive(Debug)]
struct Session {
    ctx: ContextStore,
    next_turn: u64,
}

pub struct Assistant {
    config: ServiceConfig,
    gateway: Gateway,
    fixtures: FixtureDetector,
    detector: Arc<dyn Detector>,
    asr: Arc<dyn SpeechRecognizer>,
    tts: Arc<dyn SpeechSynthesizer>,
    base_ctx: ContextStore,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    real_clock: RealClock,
}

impl std::fmt::Debug for Assistant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Assistant")
            .field("backend", &self.gateway.backend_id())
            .field("log_dir", &self.config.log_dir)
            .finish()
    }
}

fn config_err(e: impl std::fmt::Display) -> AssistantError {
    AssistantError::Config(e.to_string())
}

impl Assistant {
    pub fn from_config(config: ServiceConfig) -> Result<Self, AssistantError> {
        config.validate()?;
        let backend: Arc<dyn ChatBackend> = match &config.backend {
            BackendConfig::Mock { scenario: Some(p) } => Arc::new(MockBackend::from_file(p).map_err(config_err)?),
            BackendConfig::Mock { scenario: None } => {
                Arc::new(MockBackend::from_json(crate::fixtures::PROJECTILE_SCENARIO).map_err(config_err)?)
            }
            BackendConfig::Remote {
                endpoint,
                credential_env,
            } => Arc::new(RemoteBackend::new(endpoint, credential_env.clone()).map_err(config_err)?),
        };
        Self::with_backend(config, backend)
    }

    /// Build with an explicit backend; everything else comes from `config`.
    pub fn with_backend(config: ServiceConfig, backend: Arc<dyn ChatBackend>) -> Result<Self, AssistantError> {
        config.validate()?;
        let mut fixtures = FixtureDetector::bundled(Duration::ZERO);
        let detector: Arc<dyn Detector> = match &config.detector {
            DetectorConfig::Fixture { dir } => {
                if let Some(dir) = dir {
                    fixtures
                        .load_dir(dir)
                        .map_err(|e| config_err(format!("{}: {e}", dir.display())))?;
                }
                Arc::new(fixtures.clone())
            }
            DetectorConfig::Remote { endpoint, timeout_s } => {
                Arc::new(RemoteDetector::new(endpoint.clone(), secs(*timeout_s)).map_err(config_err)?)
            }
        };
        let mut base_ctx = ContextStore::default().with_max_history_turns(config.max_history_turns);
        if let Some(b) = &config.experiment_brief {
            base_ctx.experiment_brief = b.clone();
        }
        if let Some(p) = &config.system_preamble {
            base_ctx.system_preamble = p.clone();
        }
        Ok(Self {
            gateway: Gateway::new(backend).with_seed(config.gateway_seed),
            fixtures,
            detector,
            asr: Arc::new(FixtureAsr {
                latency: secs(config.asr_latency_s),
            }),
            tts: Arc::new(FixtureTts {
                latency: secs(config.tts_latency_s),
            }),
            base_ctx,
            sessions: Mutex::new(HashMap::new()),
            real_clock: RealClock::new(),
            config,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn fixture_names(&self) -> Vec<String> {
        self.fixtures.names()
    }

    pub fn create_session(&self) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        self.open_session(&id);
        id
    }

    /// Open (or reuse) a session with a caller-chosen id.
    pub fn open_session(&self, id: &str) {
        let mut map = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(id.to_string()).or_insert_with(|| {
            Arc::new(Mutex::new(Session {
                ctx: self.base_ctx.clone(),
                next_turn: 1,
            }))
        });
    }

    pub fn has_session(&self, id: &str) -> bool {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).contains_key(id)
    }

    /// History the next prompt of this session will carry.
    pub fn session_context(&self, id: &str) -> Result<ContextStore, AssistantError> {
        let s = self.session(id)?;
        let guard = s.lock().unwrap_or_else(|e| e.into_inner());
        Ok(guard.ctx.clone())
    }

    pub fn log_path(&self, session_id: &str) -> Option<PathBuf> {
        self.config
            .log_dir
            .as_ref()
            .map(|d| d.join(format!("{session_id}.jsonl")))
    }

    fn tts_dir(&self, session_id: &str) -> Option<PathBuf> {
        self.config.log_dir.as_ref().map(|d| d.join("tts").join(session_id))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, AssistantError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| AssistantError::SessionNotFound(id.to_string()))
    }

    /// Run one turn. Completed and failed turns are appended to the session
    /// log before this returns; a missing wake phrase is not logged.
    pub fn run_turn(&self, session_id: &str, input: TurnInput) -> Result<TurnRecord, AssistantError> {
        let session = self.session(session_id)?;
        let mut guard = match session.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(AssistantError::SessionBusy(session_id.to_string())),
            Err(TryLockError::Poisoned(e)) => e.into_inner(),
        };
        input.check()?;

        let simulated;
        let clock: &dyn Clock = match self.config.clock {
            ClockMode::Simulated => {
                simulated = SimulatedClock::new();
                &simulated
            }
            ClockMode::Real => &self.real_clock,
        };

        let mut turn = TurnBuilder::new(session_id, guard.next_turn, input.clone(), clock);
        let outcome = self.execute(&guard.ctx, &input, &mut turn, clock);
        if let Err(TurnStop::NotTriggered) = outcome {
            return Err(AssistantError::NotTriggered);
        }
        let record = turn.finish(outcome.err().and_then(TurnStop::into_failure));

        if let Some(path) = self.log_path(session_id) {
            append_record(&path, &record)?;
        }
        guard.next_turn += 1;
        if let Some(f) = &record.error {
            return Err(AssistantError::Stage {
                stage: f.stage,
                message: f.message.clone(),
                record: Box::new(record),
            });
        }
        if let Some(answer) = &record.answer {
            guard.ctx = guard.ctx.append_turn(record.question.clone(), answer.clone());
        }
        Ok(record)
    }

    fn execute(
        &self,
        ctx: &ContextStore,
        input: &TurnInput,
        turn: &mut TurnBuilder,
        clock: &dyn Clock,
    ) -> Result<(), TurnStop> {
        // Speech in.
        let t0 = clock.now();
        let transcript = match (&input.utterance, &input.audio_uri) {
            (Some(text), _) => self.asr.transcribe_text(text, clock),
            (None, Some(uri)) => self
                .asr
                .transcribe(
                    &AudioRef {
                        uri: uri.clone(),
                        duration: None,
                    },
                    clock,
                )
                .map_err(|e| failed(Stage::Asr, e))?,
            (None, None) => unreachable!("input checked"),
        };
        turn.record.latency.speech_s += (clock.now() - t0).as_secs_f64();
        let (triggered, remainder) = wake_gate(&transcript.text);
        turn.record.transcript = Some(transcript.clone());
        if !triggered && self.config.wake_required {
            return Err(TurnStop::NotTriggered);
        }
        let question = if triggered {
            remainder
        } else {
            transcript.text.trim().to_string()
        };
        turn.record.question = question.clone();

        // Perception.
        let t0 = clock.now();
        let doc = self.perceive(input, clock).map_err(|e| failed(Stage::Perception, e))?;
        let scene = ingest_scene(&doc)
            .map_err(|e| failed(Stage::Perception, e))?
            .with_default_calibration(self.config.calibration);
        turn.record.latency.perception_s = (clock.now() - t0).as_secs_f64();
        let cap = caption(&scene);
        turn.record.scene = Some(scene.clone());
        turn.record.caption = Some(cap.clone());

        // Prompt, generation and validation.
        let notes: Vec<String> = referent_note(&question, &scene).into_iter().collect();
        let prompt = build_prompt_with_notes(&question, &cap, ctx, &notes, self.config.prompt_budget)
            .map_err(|e| failed(Stage::Prompt, e))?;
        let result = validate_with_revision(
            &self.gateway,
            &prompt,
            &self.config.params,
            &cap.facts,
            &question,
            self.config.max_revisions,
            clock,
            &self.config.validator,
        );
        let outcome = match result {
            Ok(o) => o,
            Err(e) => {
                for a in e.attempts() {
                    turn.push_attempt(a);
                }
                return Err(match e {
                    RevisionError::Gateway {
                        error, pending_prompt, ..
                    } => {
                        turn.record.prompts.push(*pending_prompt);
                        TurnStop::Failed(Stage::Generation, error.to_string())
                    }
                    RevisionError::Prompt { error, .. } => TurnStop::Failed(Stage::Prompt, error.to_string()),
                });
            }
        };
        for a in &outcome.attempts {
            turn.push_attempt(a);
        }
        turn.record.exhausted = outcome.exhausted;
        turn.record.accepted = outcome.accepted();
        if outcome.accepted() {
            turn.record.answer = Some(outcome.final_response().text.clone());
        }

        // Speech out: only validated answers are ever spoken.
        let spoken_text = match &turn.record.answer {
            Some(a) => a.clone(),
            None => UNVERIFIED_NOTICE.to_string(),
        };
        let t0 = clock.now();
        turn.record.spoken = match self.tts_dir(turn.record.session_id.as_str()) {
            Some(dir) => {
                let stem = format!("{:06}", turn.record.turn_id);
                Some(
                    self.tts
                        .synthesize(&spoken_text, &dir, Some(&stem), clock)
                        .map_err(|e| failed(Stage::Speech, e))?,
                )
            }
            None => {
                clock.simulate(secs(self.config.tts_latency_s));
                None
            }
        };
        turn.record.latency.speech_s += (clock.now() - t0).as_secs_f64();
        turn.record.spoken_text = Some(spoken_text);
        Ok(())
    }

    fn perceive(&self, input: &TurnInput, clock: &dyn Clock) -> Result<SceneDocument, crate::scene::SceneError> {
        if let Some(doc) = &input.scene {
            if let Some(s) = doc.simulated_latency_s {
                clock.simulate(secs(s));
            }
            return Ok(doc.clone());
        }
        if let Some(name) = &input.scene_fixture {
            return self.fixtures.detect(&ImageRef::new(name.clone()), clock);
        }
        let uri = input.image_ref.clone().unwrap_or_default();
        self.detector.detect(&ImageRef::new(uri), clock)
    }
}

/// A context line naming the detection a positional phrase points at.
fn referent_note(question: &str, scene: &ScenePerception) -> Option<String> {
    let det = resolve_referent(question, scene).ok()?;
    let at = match scene.world_position(det) {
        Some((x, y)) => format!(" at ({}, {}) m", crate::scene::fmt2(x), crate::scene::fmt2(y)),
        None => String::new(),
    };
    Some(format!("The {} the question asks about is {}{at}.", det.label, det.id))
}

fn failed(stage: Stage, e: impl std::fmt::Display) -> TurnStop {
    TurnStop::Failed(stage, e.to_string())
}

enum TurnStop {
    NotTriggered,
    Failed(Stage, String),
}

impl TurnStop {
    fn into_failure(self) -> Option<TurnFailure> {
        match self {
            Self::NotTriggered => None,
            Self::Failed(stage, message) => Some(TurnFailure { stage, message }),
        }
    }
}

struct TurnBuilder<'c> {
    record: TurnRecord,
    clock: &'c dyn Clock,
    start: Duration,
}

impl<'c> TurnBuilder<'c> {
    fn new(session_id: &str, turn_id: u64, input: TurnInput, clock: &'c dyn Clock) -> Self {
        Self {
            record: TurnRecord {
                schema_version: TURN_SCHEMA_VERSION.to_string(),
                session_id: session_id.to_string(),
                turn_id,
                timestamp: Utc::now(),
                question_id: input.question_id.clone(),
                input,
                transcript: None,
                question: String::new(),
                scene: None,
                caption: None,
                prompts: Vec::new(),
                responses: Vec::new(),
                verdicts: Vec::new(),
                accepted: false,
                exhausted: false,
                answer: None,
                spoken_text: None,
                spoken: None,
                latency: LatencyBreakdown::default(),
                template_version: CAPTION_TEMPLATE_VERSION.to_string(),
                error: None,
            },
            start: clock.now(),
            clock,
        }
    }

    fn push_attempt(&mut self, a: &crate::validate::Attempt) {
        self.record.prompts.push(a.prompt.clone());
        self.record.responses.push(a.response.clone());
        self.record.verdicts.push(a.verdict.clone());
        self.record.latency.llm_s += a.response.latency;
        self.record.latency.validation_s += a.validation_s;
    }

    fn finish(mut self, failure: Option<TurnFailure>) -> TurnRecord {
        let elapsed = (self.clock.now() - self.start).as_secs_f64();
        let l = &mut self.record.latency;
        l.total_s = elapsed.max(l.stage_sum());
        self.record.error = failure;
        self.record
    }
}

/// Re-run every turn of a session log against fresh backends built from
/// `config`, reusing the logged session and turn ids. Nothing is written.
pub fn replay(log_path: &Path, config: &ServiceConfig) -> Result<Vec<TurnRecord>, AssistantError> {
    let records = read_log(log_path)?;
    let mut cfg = config.clone();
    cfg.log_dir = None;
    let assistant = Assistant::from_config(cfg)?;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        assistant.open_session(&rec.session_id);
        match assistant.run_turn(&rec.session_id, rec.input.clone()) {
            Ok(r) => out.push(r),
            Err(AssistantError::Stage { record, .. }) => out.push(*record),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
