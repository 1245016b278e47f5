use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gateway::GenerationParams;
use crate::prompt::{DEFAULT_CHAR_BUDGET, DEFAULT_MAX_HISTORY_TURNS};
use crate::scene::Calibration;
use crate::validate::{ValidatorConfig, DEFAULT_MAX_REVISIONS};

use super::AssistantError;

pub const DEFAULT_CREDENTIAL_ENV: &str = "LABASSIST_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// Scenario file; the bundled projectile scenario when absent.
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<PathBuf>,
    },
    Remote {
        endpoint: String,
        #[serde(default = "default_credential_env")]
        credential_env: String,
    },
}

fn default_credential_env() -> String {
    DEFAULT_CREDENTIAL_ENV.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorConfig {
    /// Bundled scene fixtures, plus any `*.json` in `dir`.
    Fixture {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
    },
    Remote {
        endpoint: String,
        #[serde(default = "default_detector_timeout")]
        timeout_s: f64,
    },
}

fn default_detector_timeout() -> f64 {
    crate::scene::DEFAULT_DETECTOR_TIMEOUT.as_secs_f64()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Simulated,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub backend: BackendConfig,
    pub params: GenerationParams,
    pub detector: DetectorConfig,
    /// Applied to scenes that arrive without a calibration.
    pub calibration: Option<Calibration>,
    pub prompt_budget: usize,
    pub max_history_turns: usize,
    pub max_revisions: u32,
    pub validator: ValidatorConfig,
    pub listen: String,
    /// Session logs and TTS output; `None` disables both.
    pub log_dir: Option<PathBuf>,
    pub wake_required: bool,
    pub clock: ClockMode,
    pub asr_latency_s: f64,
    pub tts_latency_s: f64,
    pub gateway_seed: u64,
    pub experiment_brief: Option<String>,
    pub system_preamble: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            backend: BackendConfig::Mock { scenario: None },
            params: GenerationParams::default(),
            detector: DetectorConfig::Fixture { dir: None },
            calibration: None,
            prompt_budget: DEFAULT_CHAR_BUDGET,
            max_history_turns: DEFAULT_MAX_HISTORY_TURNS,
            max_revisions: DEFAULT_MAX_REVISIONS,
            validator: ValidatorConfig::default(),
            listen: "127.0.0.1:8080".to_string(),
            log_dir: Some(PathBuf::from("logs")),
            wake_required: true,
            clock: ClockMode::Simulated,
            asr_latency_s: crate::speech::DEFAULT_ASR_LATENCY.as_secs_f64(),
            tts_latency_s: crate::speech::DEFAULT_TTS_LATENCY.as_secs_f64(),
            gateway_seed: 0x5eed,
            experiment_brief: None,
            system_preamble: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_json(text: &str) -> Result<Self, AssistantError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| AssistantError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, AssistantError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| AssistantError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Relative paths in a config file are relative to the file.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let BackendConfig::Mock { scenario: Some(p) } = &mut self.backend {
            fix(p);
        }
        if let DetectorConfig::Fixture { dir: Some(p) } = &mut self.detector {
            fix(p);
        }
        if let Some(p) = &mut self.log_dir {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), AssistantError> {
        self.params
            .validate()
            .map_err(|e| AssistantError::Config(e.to_string()))?;
        if let Some(c) = &self.calibration {
            c.validate().map_err(|e| AssistantError::Config(e.to_string()))?;
        }
        for (name, v) in [
            ("asr_latency_s", self.asr_latency_s),
            ("tts_latency_s", self.tts_latency_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(AssistantError::Config(format!("{name} must be a non-negative number")));
            }
        }
        if let DetectorConfig::Remote { timeout_s, .. } = &self.detector {
            if !(timeout_s.is_finite() && *timeout_s > 0.0) {
                return Err(AssistantError::Config("detector timeout_s must be positive".into()));
            }
        }
        if self.max_history_turns == 0 {
            return Err(AssistantError::Config("max_history_turns must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(ServiceConfig::from_json("{}").unwrap(), ServiceConfig::default());
    }

    #[test]
    fn remote_backend_round_trips() {
        let cfg = ServiceConfig::from_json(
            r#"{"backend":{"kind":"remote","endpoint":"https://llm.example/v1/chat/completions"},
                "max_revisions":1,"clock":"real"}"#,
        )
        .unwrap();
        assert_eq!(
            cfg.backend,
            BackendConfig::Remote {
                endpoint: "https://llm.example/v1/chat/completions".into(),
                credential_env: DEFAULT_CREDENTIAL_ENV.into()
            }
        );
        assert_eq!(cfg.clock, ClockMode::Real);
        let again: ServiceConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_configs() {
        assert!(ServiceConfig::from_json(r#"{"backend":{"kind":"both"}}"#).is_err());
        assert!(ServiceConfig::from_json(r#"{"asr_latency_s":-1}"#).is_err());
        assert!(ServiceConfig::from_json(r#"{"params":{"max_output_chars":0}}"#).is_err());
        assert!(
            ServiceConfig::from_json(r#"{"calibration":{"pixels_per_meter":0,"origin_px":[0,0],"y_up":true}}"#)
                .is_err()
        );
    }

    #[test]
    fn file_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svc.json");
        std::fs::write(
            &path,
            r#"{"backend":{"kind":"mock","scenario":"s.json"},"log_dir":"logs"}"#,
        )
        .unwrap();
        let cfg = ServiceConfig::from_file(&path).unwrap();
        assert_eq!(cfg.log_dir, Some(dir.path().join("logs")));
        assert_eq!(
            cfg.backend,
            BackendConfig::Mock {
                scenario: Some(dir.path().join("s.json"))
            }
        );
    }
}
