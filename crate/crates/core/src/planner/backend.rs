//! Text generators behind the planner.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("scripted backend has no completion left for attempt {0}")]
    ScriptExhausted(usize),
}

/// Produces one completion for a conversation.
pub trait GeneratorBackend {
    fn generate(&mut self, conversation: &[Message]) -> Result<String, BackendError>;
}

/// Replays canned completions in order and records what it was sent.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    completions: Vec<String>,
    next: usize,
    pub received: Vec<Vec<Message>>,
}

impl ScriptedBackend {
    pub fn new(completions: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            completions: completions.into_iter().map(Into::into).collect(),
            next: 0,
            received: Vec::new(),
        }
    }

    /// Loads a JSON array of completion strings.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let items: Vec<String> = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: expected a JSON array of strings: {e}", path.display())))?;
        Ok(Self::new(items))
    }
}

impl GeneratorBackend for ScriptedBackend {
    fn generate(&mut self, conversation: &[Message]) -> Result<String, BackendError> {
        self.received.push(conversation.to_vec());
        let out = self
            .completions
            .get(self.next)
            .cloned()
            .ok_or(BackendError::ScriptExhausted(self.next + 1))?;
        self.next += 1;
        Ok(out)
    }
}

fn default_temperature() -> f64 {
    0.0
}

fn default_timeout() -> u64 {
    120
}

/// Settings for an OpenAI-style chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token; no header when unset.
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
}

impl RemoteConfig {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_seconds)))
            .build()
            .into();
        Self { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl GeneratorBackend for RemoteBackend {
    fn generate(&mut self, conversation: &[Message]) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": conversation,
            "temperature": self.config.temperature,
        });
        let mut request = self.agent.post(self.endpoint());
        if let Some(var) = &self.config.api_key_env_var {
            if let Ok(key) = std::env::var(var) {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
        }
        let response = request.send_json(&body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => BackendError::Protocol(format!("HTTP status {code}")),
            other => BackendError::Unreachable(other.to_string()),
        })?;
        let value: Value = response
            .into_body()
            .read_json()
            .map_err(|e| BackendError::Protocol(format!("response is not JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Protocol("response has no choices[0].message.content".into()))
    }
}
