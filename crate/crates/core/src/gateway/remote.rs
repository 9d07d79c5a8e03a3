use std::io::ErrorKind;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tracing::{debug, warn};

use super::{BackendError, BackendKind, CompletionBackend};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("backend timeout must be positive")]
    ZeroTimeout,
    #[error("backend endpoint is not set")]
    MissingEndpoint,
}

/// Settings for a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First retry waits this long; each further retry doubles it.
    pub backoff_base_ms: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".to_string(),
            model: "gpt-4o-mini".to_string(),
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_base_ms: 1_000,
            temperature: 0.0,
            max_tokens: 256,
            api_key_env: "HANDCUE_API_KEY".to_string(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout_ms == 0 {
            return Err(ConfigError::ZeroTimeout);
        }
        if self.endpoint.trim().is_empty() {
            return Err(ConfigError::MissingEndpoint);
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Upper bound on the time one stage may spend in the backend,
    /// retries and backoff included.
    pub fn stage_budget(&self) -> Duration {
        self.timeout() * (self.max_retries + 1)
    }
}

/// Client for the de-facto chat-completions protocol.
pub struct RemoteBackend {
    cfg: BackendConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint", &self.cfg.endpoint)
            .field("model", &self.cfg.model)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl RemoteBackend {
    /// Builds a client, reading the token from the configured environment
    /// variable.
    pub fn new(cfg: BackendConfig) -> Result<Self, ConfigError> {
        let token = std::env::var(&cfg.api_key_env).ok().filter(|t| !t.is_empty());
        Self::with_token(cfg, token)
    }

    pub fn with_token(cfg: BackendConfig, token: Option<String>) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { cfg, token, agent })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn attempt(&self, prompt: &str, timeout: Duration) -> Result<String, BackendError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let mut req = self
            .agent
            .post(&self.cfg.endpoint)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&body).map_err(map_transport)?;
        let status = resp.status().as_u16();
        if status == 429 {
            return Err(BackendError::RateLimited);
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::HttpStatus(status));
        }
        let value: Value = resp.body_mut().read_json().map_err(|e| match map_transport(e) {
            BackendError::TransportError(m) => BackendError::MalformedResponse(m),
            other => other,
        })?;
        extract_message(&value)
    }
}

fn map_transport(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(e) if matches!(e.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
            BackendError::Timeout
        }
        other => BackendError::TransportError(other.to_string()),
    }
}

/// Pulls `choices[0].message.content` out of a response body.
pub(crate) fn extract_message(value: &Value) -> Result<String, BackendError> {
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))
}

impl CompletionBackend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    /// Retries retryable failures with exponential backoff, never spending
    /// more than `timeout × (retries + 1)` in total.
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let deadline = Instant::now() + self.cfg.stage_budget();
        let mut backoff = Duration::from_millis(self.cfg.backoff_base_ms);
        let mut attempt = 0;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(BackendError::Timeout);
            }
            let result = self.attempt(prompt, remaining.min(self.cfg.timeout()));
            match result {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.cfg.max_retries => {
                    attempt += 1;
                    let remaining = deadline.saturating_duration_since(Instant::now());
                    warn!(attempt, error = %e, "backend request failed, retrying");
                    std::thread::sleep(backoff.min(remaining));
                    backoff *= 2;
                }
                Err(e) => {
                    debug!(attempt, error = %e, "backend request failed");
                    return Err(e);
                }
            }
        }
    }
}
