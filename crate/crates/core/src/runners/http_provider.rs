//! Provider backed by an OpenAI-compatible chat-completions endpoint.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::provider::{Provider, ProviderError, ProviderRequest, ProviderResponse, TokenCounts};

pub struct HttpProvider {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    client: reqwest::blocking::Client,
    min_interval: Duration,
    last_call: Mutex<Option<Instant>>,
}

impl HttpProvider {
    pub fn new(
        endpoint: &str,
        api_key: Option<String>,
        model: &str,
    ) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
            client,
            min_interval: Duration::from_millis(200),
            last_call: Mutex::new(None),
        })
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }

    fn url(&self) -> String {
        if self.endpoint.ends_with("/chat/completions") {
            self.endpoint.clone()
        } else {
            format!("{}/chat/completions", self.endpoint)
        }
    }

    fn pace(&self) {
        let mut last = self.last_call.lock().expect("provider pacing poisoned");
        if let Some(prev) = *last {
            let since = prev.elapsed();
            if since < self.min_interval {
                std::thread::sleep(self.min_interval - since);
            }
        }
        *last = Some(Instant::now());
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.pace();
        let mut body = json!({
            "model": request.model.clone().unwrap_or_else(|| self.model.clone()),
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.prompt},
            ],
            "temperature": request.temperature.unwrap_or(0.0),
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }
        if request.schema.is_some() {
            body["response_format"] = json!({"type": "json_object"});
        }
        let mut req = self.client.post(self.url()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        let status = resp.status();
        let value: Value = resp
            .json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Unavailable(format!(
                "HTTP {status}: {value}"
            )));
        }
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::BadResponse("no choices[0].message.content".into()))?
            .to_string();
        let tokens = TokenCounts {
            prompt: value
                .pointer("/usage/prompt_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
            completion: value
                .pointer("/usage/completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
        };
        Ok(ProviderResponse { text, tokens })
    }
}
