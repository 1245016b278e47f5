use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{SceneDocument, SceneError};
use crate::clock::{secs, Clock};

pub const DEFAULT_DETECTOR_TIMEOUT: Duration = Duration::from_secs(2);

/// Opaque reference to a captured image: a fixture name, a file path or
/// whatever handle the remote detector understands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub uri: String,
}

impl ImageRef {
    pub fn new(uri: impl Into<String>) -> Self {
        Self { uri: uri.into() }
    }
}

/// Anything that turns an image reference into a detector wire document.
pub trait Detector: Send + Sync {
    fn detect(&self, image: &ImageRef, clock: &dyn Clock) -> Result<SceneDocument, SceneError>;
}

/// Serves pre-recorded detector documents by name.
#[derive(Debug, Clone, Default)]
pub struct FixtureDetector {
    scenes: BTreeMap<String, String>,
    default_latency: Duration,
}

impl FixtureDetector {
    pub fn new(default_latency: Duration) -> Self {
        Self {
            scenes: BTreeMap::new(),
            default_latency,
        }
    }

    /// The scenes shipped with the crate.
    pub fn bundled(default_latency: Duration) -> Self {
        let mut d = Self::new(default_latency);
        for (name, text) in crate::fixtures::SCENES {
            d.scenes.insert((*name).to_string(), (*text).to_string());
        }
        d
    }

    pub fn insert(&mut self, name: impl Into<String>, document_json: impl Into<String>) {
        self.scenes.insert(name.into(), document_json.into());
    }

    /// Add every `*.json` file in `dir`, keyed by file stem.
    pub fn load_dir(&mut self, dir: &Path) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    let text = std::fs::read_to_string(&path)?;
                    self.scenes.insert(stem.to_string(), text);
                }
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.scenes.keys().cloned().collect()
    }

    pub fn document(&self, name: &str) -> Result<SceneDocument, SceneError> {
        let text = match self.scenes.get(name) {
            Some(t) => t.clone(),
            None if Path::new(name).is_file() => {
                std::fs::read_to_string(name).map_err(|e| SceneError::Detector(format!("{name}: {e}")))?
            }
            None => return Err(SceneError::Detector(format!("unknown scene fixture {name:?}"))),
        };
        SceneDocument::from_json(&text)
    }
}

impl Detector for FixtureDetector {
    fn detect(&self, image: &ImageRef, clock: &dyn Clock) -> Result<SceneDocument, SceneError> {
        let doc = self.document(&image.uri)?;
        let latency = doc.simulated_latency_s.map(secs).unwrap_or(self.default_latency);
        clock.simulate(latency);
        Ok(doc)
    }
}

/// Client for a detector service that answers `POST {"image_ref": ...}` with
/// a wire document.
#[derive(Debug, Clone)]
pub struct RemoteDetector {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteDetector {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, SceneError> {
        let endpoint = endpoint.into();
        reqwest::Url::parse(&endpoint).map_err(|e| SceneError::Detector(format!("bad endpoint {endpoint:?}: {e}")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SceneError::Detector(e.to_string()))?;
        Ok(Self { endpoint, client })
    }
}

impl Detector for RemoteDetector {
    fn detect(&self, image: &ImageRef, _clock: &dyn Clock) -> Result<SceneDocument, SceneError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({ "image_ref": image.uri }))
            .send()
            .map_err(|e| SceneError::Detector(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(SceneError::Detector(format!("detector returned {status}")));
        }
        let body = resp.text().map_err(|e| SceneError::Detector(e.to_string()))?;
        SceneDocument::from_json(&body)
    }
}
