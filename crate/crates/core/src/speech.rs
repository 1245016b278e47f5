//! Wake-word gating and fixture speech adapters.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;

pub const WAKE_PHRASE: &str = "hey physicsassistant";
pub const DEFAULT_ASR_LATENCY: Duration = Duration::from_millis(50);
pub const DEFAULT_TTS_LATENCY: Duration = Duration::from_millis(50);
pub const WORDS_PER_SECOND: f64 = 2.5;

#[derive(Debug, Error)]
pub enum SpeechError {
    #[error("no transcript sidecar at {0}")]
    FixtureMissing(String),
    #[error("speech i/o failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptSource {
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub source: TranscriptSource,
    pub asr_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioRef {
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

/// Returns whether the utterance opens with the wake phrase, and the rest of
/// it. Non-triggering utterances come back unchanged.
pub fn wake_gate(utterance: &str) -> (bool, String) {
    let start = utterance.trim_start_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation());
    let mut chars = start.char_indices();
    let mut end = None;
    let mut phrase = WAKE_PHRASE.chars();
    loop {
        match (phrase.next(), chars.next()) {
            (None, next) => {
                end = Some(next.map_or(start.len(), |(i, _)| i));
                break;
            }
            (Some(p), Some((_, c))) if c.to_lowercase().eq(std::iter::once(p)) => {}
            _ => break,
        }
    }
    let Some(end) = end else {
        return (false, utterance.to_string());
    };
    let rest = &start[end..];
    if rest.chars().next().is_some_and(char::is_alphanumeric) {
        return (false, utterance.to_string());
    }
    let rest = rest.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, ',' | '!' | '.'));
    (true, rest.trim().to_string())
}

pub trait SpeechRecognizer: Send + Sync {
    fn transcribe(&self, audio: &AudioRef, clock: &dyn Clock) -> Result<Transcript, SpeechError>;

    /// Typed input that skips decoding but still passes through the stage.
    fn transcribe_text(&self, text: &str, clock: &dyn Clock) -> Transcript;
}

pub trait SpeechSynthesizer: Send + Sync {
    /// Synthesize `text` into `out_dir`. `stem` names the output file;
    /// without one a timestamped unique name is chosen.
    fn synthesize(
        &self,
        text: &str,
        out_dir: &Path,
        stem: Option<&str>,
        clock: &dyn Clock,
    ) -> Result<AudioRef, SpeechError>;
}

/// Reads transcripts from `<uri>.txt` sidecar files.
#[derive(Debug, Clone)]
pub struct FixtureAsr {
    pub latency: Duration,
}

impl Default for FixtureAsr {
    fn default() -> Self {
        Self {
            latency: DEFAULT_ASR_LATENCY,
        }
    }
}

impl SpeechRecognizer for FixtureAsr {
    fn transcribe(&self, audio: &AudioRef, clock: &dyn Clock) -> Result<Transcript, SpeechError> {
        let sidecar = format!("{}.txt", audio.uri);
        let text = std::fs::read_to_string(&sidecar).map_err(|_| SpeechError::FixtureMissing(sidecar))?;
        Ok(self.transcribe_text(text.trim_end_matches(['\n', '\r']), clock))
    }

    fn transcribe_text(&self, text: &str, clock: &dyn Clock) -> Transcript {
        clock.simulate(self.latency);
        Transcript {
            text: text.to_string(),
            source: TranscriptSource::Fixture,
            asr_latency: self.latency.as_secs_f64(),
        }
    }
}

pub fn fixture_asr(audio: &AudioRef, clock: &dyn Clock) -> Result<Transcript, SpeechError> {
    FixtureAsr::default().transcribe(audio, clock)
}

/// Writes the text it is asked to speak and reports a duration from the word
/// count.
#[derive(Debug, Clone)]
pub struct FixtureTts {
    pub latency: Duration,
}

impl Default for FixtureTts {
    fn default() -> Self {
        Self {
            latency: DEFAULT_TTS_LATENCY,
        }
    }
}

pub fn spoken_duration(text: &str) -> f64 {
    text.split_whitespace().count() as f64 / WORDS_PER_SECOND
}

static TTS_SEQ: AtomicU64 = AtomicU64::new(0);

fn unique_stem() -> String {
    format!(
        "{}-{}-{}",
        chrono::Utc::now().format("%Y%m%dT%H%M%S%.6fZ"),
        std::process::id(),
        TTS_SEQ.fetch_add(1, Ordering::Relaxed)
    )
}

impl SpeechSynthesizer for FixtureTts {
    fn synthesize(
        &self,
        text: &str,
        out_dir: &Path,
        stem: Option<&str>,
        clock: &dyn Clock,
    ) -> Result<AudioRef, SpeechError> {
        let io = |e: std::io::Error| SpeechError::Io(format!("{}: {e}", out_dir.display()));
        std::fs::create_dir_all(out_dir).map_err(io)?;
        let path: PathBuf = match stem {
            Some(s) => out_dir.join(format!("{s}.txt")),
            None => out_dir.join(format!("{}.txt", unique_stem())),
        };
        let mut file = if stem.is_some() {
            OpenOptions::new().write(true).create(true).truncate(true).open(&path)
        } else {
            OpenOptions::new().write(true).create_new(true).open(&path)
        }
        .map_err(io)?;
        file.write_all(text.as_bytes()).map_err(io)?;
        clock.simulate(self.latency);
        Ok(AudioRef {
            uri: path.to_string_lossy().into_owned(),
            duration: Some(spoken_duration(text)),
        })
    }
}

pub fn fixture_tts(text: &str, out_dir: &Path, clock: &dyn Clock) -> Result<AudioRef, SpeechError> {
    FixtureTts::default().synthesize(text, out_dir, None, clock)
}
