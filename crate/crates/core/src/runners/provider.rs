//! LLM provider abstraction and per-task call recording.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub system: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ProviderRequest {
    pub fn new(system: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            prompt: prompt.into(),
            schema: None,
            seed: None,
            model: None,
            temperature: None,
            max_tokens: None,
        }
    }

    pub fn schema(mut self, schema: serde_json::Value) -> Self {
        self.schema = Some(schema);
        self
    }

    pub fn seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    #[serde(default)]
    pub tokens: TokenCounts,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider-unavailable: {0}")]
    Unavailable(String),
    #[error("provider returned an unusable response: {0}")]
    BadResponse(String),
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

/// One recorded exchange with a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderCall {
    pub task_id: String,
    pub index: u32,
    pub system: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub response: String,
    pub token_counts: TokenCounts,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CallError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("limit-exceeded: provider call budget of {0} exhausted")]
    BudgetExhausted(u32),
}

/// Wraps a provider for one task: enforces the call budget and keeps an
/// append-only transcript, optionally mirrored to a newline-delimited log.
pub struct CallRecorder {
    provider: Arc<dyn Provider>,
    task_id: String,
    budget: u32,
    seed: Option<u64>,
    log_path: Option<PathBuf>,
    calls: Mutex<Vec<ProviderCall>>,
}

impl CallRecorder {
    pub fn new(provider: Arc<dyn Provider>, task_id: &str, budget: u32, seed: Option<u64>) -> Self {
        Self {
            provider,
            task_id: task_id.to_string(),
            budget,
            seed,
            log_path: None,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn with_log(mut self, path: PathBuf) -> Self {
        self.log_path = Some(path);
        self
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn call_count(&self) -> u32 {
        self.calls.lock().expect("recorder poisoned").len() as u32
    }

    pub fn remaining(&self) -> u32 {
        self.budget.saturating_sub(self.call_count())
    }

    pub fn calls(&self) -> Vec<ProviderCall> {
        self.calls.lock().expect("recorder poisoned").clone()
    }

    /// Fills in the task seed when the request has none, then calls through.
    pub fn complete(&self, mut request: ProviderRequest) -> Result<String, CallError> {
        let mut calls = self.calls.lock().expect("recorder poisoned");
        if calls.len() as u32 >= self.budget {
            return Err(CallError::BudgetExhausted(self.budget));
        }
        if request.seed.is_none() {
            request.seed = self.seed;
        }
        let response = self.provider.complete(&request)?;
        let call = ProviderCall {
            task_id: self.task_id.clone(),
            index: calls.len() as u32 + 1,
            system: request.system,
            prompt: request.prompt,
            schema: request.schema,
            seed: request.seed,
            response: response.text.clone(),
            token_counts: response.tokens,
        };
        if let Some(path) = &self.log_path {
            if let Err(e) = append_line(path, &call) {
                tracing::warn!(path = %path.display(), "could not persist provider call: {e}");
            }
        }
        calls.push(call);
        Ok(response.text)
    }
}

fn append_line(path: &PathBuf, call: &ProviderCall) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(call).map_err(std::io::Error::other)?;
    line.push('\n');
    f.write_all(line.as_bytes())
}

/// Rough whitespace token estimate, used by providers that report no counts.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;
    impl Provider for Echo {
        fn name(&self) -> &str {
            "echo"
        }
        fn complete(&self, r: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
            Ok(ProviderResponse {
                text: r.prompt.clone(),
                tokens: TokenCounts::default(),
            })
        }
    }

    #[test]
    fn budget_is_enforced_and_calls_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("calls/t.log");
        let rec = CallRecorder::new(Arc::new(Echo), "t", 2, Some(7)).with_log(log.clone());
        assert_eq!(rec.complete(ProviderRequest::new("s", "a")).unwrap(), "a");
        assert_eq!(rec.complete(ProviderRequest::new("s", "b")).unwrap(), "b");
        assert_eq!(
            rec.complete(ProviderRequest::new("s", "c")).unwrap_err(),
            CallError::BudgetExhausted(2)
        );
        let calls = rec.calls();
        assert_eq!(calls.len(), 2);
        assert_eq!(calls[1].index, 2);
        assert_eq!(calls[0].seed, Some(7));
        assert_eq!(fs::read_to_string(log).unwrap().lines().count(), 2);
    }
}
