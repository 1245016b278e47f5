use serde_json::{json, Value};

use super::{BackendError, ChatBackend, GatewayError, GenerationParams};
use crate::clock::Clock;
use crate::prompt::Prompt;

/// Client for an OpenAI-style chat completions endpoint.
///
/// The credential is read from `credential_env` on every call and only ever
/// placed in the `Authorization` header.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    id: String,
    endpoint: reqwest::Url,
    credential_env: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, credential_env: impl Into<String>) -> Result<Self, GatewayError> {
        let url = reqwest::Url::parse(endpoint)
            .map_err(|e| GatewayError::InvalidParams(format!("bad endpoint {endpoint:?}: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(GatewayError::InvalidParams(format!(
                "endpoint must be http(s), got {}",
                url.scheme()
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::InvalidParams(e.to_string()))?;
        let host = url.host_str().unwrap_or("remote").to_string();
        Ok(Self {
            id: format!("remote:{host}"),
            endpoint: url,
            credential_env: credential_env.into(),
            client,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn request_body(prompt: &Prompt, params: &GenerationParams) -> Value {
        json!({
            "model": params.model_name,
            "temperature": params.temperature,
            "messages": [
                {"role": "system", "content": prompt.preamble()},
                {"role": "user", "content": prompt.rendered()},
            ],
        })
    }
}

pub(crate) fn is_retryable_status(status: u16) -> bool {
    matches!(status, 408 | 409 | 429) || (500..600).contains(&status)
}

fn extract_content(body: &str) -> Result<String, BackendError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Rejected(format!("malformed provider payload: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Rejected("provider payload has no choices[0].message.content".into()))
}

impl ChatBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &Prompt, params: &GenerationParams, _clock: &dyn Clock) -> Result<String, BackendError> {
        let key = std::env::var(&self.credential_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| BackendError::CredentialMissing(self.credential_env.clone()))?;
        let resp = self
            .client
            .post(self.endpoint.clone())
            .bearer_auth(key)
            .timeout(params.timeout_duration())
            .json(&Self::request_body(prompt, params))
            .send()
            .map_err(|e| BackendError::Transient(e.without_url().to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .text()
            .map_err(|e| BackendError::Transient(e.without_url().to_string()))?;
        if is_retryable_status(status) {
            return Err(BackendError::Transient(format!("provider returned {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::Rejected(format!("provider returned {status}")));
        }
        extract_content(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_taxonomy() {
        for s in [408, 429, 500, 502, 503, 504] {
            assert!(is_retryable_status(s), "{s}");
        }
        for s in [200, 400, 401, 403, 404, 422] {
            assert!(!is_retryable_status(s), "{s}");
        }
    }

    #[test]
    fn payload_parsing() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"3.00 meters"}}]}"#;
        assert_eq!(extract_content(ok).unwrap(), "3.00 meters");
        assert!(matches!(extract_content("<html>"), Err(BackendError::Rejected(_))));
        assert!(matches!(
            extract_content(r#"{"choices":[]}"#),
            Err(BackendError::Rejected(_))
        ));
    }

    #[test]
    fn endpoint_must_be_http() {
        assert!(RemoteBackend::new("ftp://x/y", "K").is_err());
        assert!(RemoteBackend::new("::", "K").is_err());
        assert!(RemoteBackend::new("https://api.example.com/v1/chat/completions", "K").is_ok());
    }
}
