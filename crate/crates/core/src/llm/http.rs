//! Chat-completion HTTP backend with bounded retries and exponential
//! backoff on transient failures.

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{GenerationParams, LlmBackend, LlmError, LlmResponse};

pub struct HttpBackend {
    id: String,
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    max_attempts: u32,
    backoff_base: Duration,
    trace: bool,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpBackend {
    /// `endpoint` is the full chat-completions URL. The API key comes from
    /// the `KCMF_LLM_API_KEY` environment variable unless given explicitly.
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::NotConfigured(e.to_string()))?;
        Ok(HttpBackend {
            id: "http".into(),
            endpoint: endpoint.into(),
            api_key: std::env::var("KCMF_LLM_API_KEY").ok(),
            client,
            max_attempts: 4,
            backoff_base: Duration::from_millis(250),
            trace: false,
        })
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_max_attempts(mut self, attempts: u32) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    /// Log request/response bodies (the API key is never logged).
    pub fn with_trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }

    fn attempt(&self, prompt: &str, params: &GenerationParams) -> Result<String, AttemptError> {
        let body = json!({
            "model": params.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        });
        if self.trace {
            log::debug!("llm request to {}: {}", self.endpoint, body);
        }
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout(e.to_string())
            } else {
                AttemptError::Transient(e.to_string())
            }
        })?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN
        {
            return Err(AttemptError::Auth(format!("status {status}")));
        }
        if status.is_server_error()
            || status == reqwest::StatusCode::TOO_MANY_REQUESTS
            || status == reqwest::StatusCode::REQUEST_TIMEOUT
        {
            return Err(AttemptError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(format!("status {status}")));
        }
        let text = resp
            .text()
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        if self.trace {
            log::debug!("llm response: {text}");
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(format!("bad response body: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .unwrap_or_default();
        Ok(content)
    }
}

enum AttemptError {
    Transient(String),
    Timeout(String),
    Auth(String),
    Fatal(String),
}

impl LlmBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete_text(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<LlmResponse, LlmError> {
        let start = Instant::now();
        let mut last = String::new();
        let mut last_was_timeout = false;
        for attempt in 0..self.max_attempts {
            match self.attempt(prompt, params) {
                Ok(text) => {
                    if attempt > 0 {
                        log::info!("llm call succeeded after {attempt} retries");
                    }
                    return Ok(LlmResponse {
                        text,
                        latency: start.elapsed(),
                        backend_id: self.id.clone(),
                    });
                }
                Err(AttemptError::Auth(detail)) => {
                    return Err(LlmError::Auth {
                        backend: self.id.clone(),
                        detail,
                    })
                }
                Err(AttemptError::Fatal(detail)) => {
                    return Err(LlmError::RetriesExhausted {
                        backend: self.id.clone(),
                        attempts: attempt + 1,
                        last: detail,
                    })
                }
                Err(AttemptError::Timeout(detail)) => {
                    last = detail;
                    last_was_timeout = true;
                }
                Err(AttemptError::Transient(detail)) => {
                    last = detail;
                    last_was_timeout = false;
                }
            }
            if attempt + 1 < self.max_attempts {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt));
            }
        }
        if last_was_timeout {
            Err(LlmError::Timeout {
                backend: self.id.clone(),
                detail: last,
            })
        } else {
            Err(LlmError::RetriesExhausted {
                backend: self.id.clone(),
                attempts: self.max_attempts,
                last,
            })
        }
    }
}
