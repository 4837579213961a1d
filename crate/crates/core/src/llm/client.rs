//! Blocking client for OpenAI-compatible chat-completions endpoints.

use super::{ChatBackend, ChatExchange, LlmError};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL up to and including the API version, e.g. `https://host/v1`.
    pub base_url: String,
    /// Name of the environment variable holding the API key; unset means no
    /// Authorization header.
    pub api_key_env: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            model: "gpt-3.5-turbo".into(),
            timeout_secs: 60,
            max_attempts: 5,
            backoff_ms: 500,
            max_backoff_ms: 20_000,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    messages: &'a [super::ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct Response {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct ChatClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    // Lowered on rate limiting, raised again on success.
    allowed: AtomicUsize,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        if config.max_attempts == 0 || config.max_in_flight == 0 {
            return Err(LlmError::Config("max_attempts and max_in_flight must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let allowed = AtomicUsize::new(config.max_in_flight);
        Ok(Self { config, http, api_key, in_flight: Mutex::new(0), slot_freed: Condvar::new(), allowed })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Current concurrency limit after rate-limit adjustments.
    pub fn allowed_in_flight(&self) -> usize {
        self.allowed.load(Ordering::Relaxed)
    }

    fn acquire(&self) {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.allowed.load(Ordering::Relaxed).max(1) {
            n = self.slot_freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
    }

    fn release(&self) {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.slot_freed.notify_all();
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.config.backoff_ms.saturating_mul(1 << attempt.min(16)).min(self.config.max_backoff_ms);
        Duration::from_millis(ms)
    }

    fn send_once(&self, exchange: &ChatExchange) -> Result<String, Attempt> {
        let model = if exchange.model.is_empty() { &self.config.model } else { &exchange.model };
        let body = Request { model, messages: &exchange.messages, temperature: exchange.temperature, max_tokens: exchange.max_tokens };
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.http.post(url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Transient(None, e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Transient(None, e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Transient(Some(status.as_u16()), text));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(LlmError::Http { status: status.as_u16(), attempts: 1, body: text }));
        }
        let parsed: Response = serde_json::from_str(&text).map_err(|e| Attempt::Fatal(LlmError::MalformedResponse(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(LlmError::MalformedResponse("no message content".into())))
    }
}

enum Attempt {
    Transient(Option<u16>, String),
    Fatal(LlmError),
}

impl ChatBackend for ChatClient {
    fn chat(&self, exchange: &ChatExchange) -> Result<String, LlmError> {
        exchange.validate()?;
        let mut last = (None, String::new());
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            self.acquire();
            let result = self.send_once(exchange);
            self.release();
            match result {
                Ok(text) => {
                    let cap = self.config.max_in_flight;
                    let _ = self.allowed.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |a| (a < cap).then_some(a + 1));
                    return Ok(text);
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Transient(status, body)) => {
                    if status == Some(429) {
                        let _ = self.allowed.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |a| (a > 1).then_some(a / 2));
                    }
                    tracing::warn!(attempt = attempt + 1, ?status, "transient chat-completions failure");
                    last = (status, body);
                }
            }
        }
        let attempts = self.config.max_attempts;
        Err(match last {
            (Some(status), body) => LlmError::Http { status, attempts, body },
            (None, message) => LlmError::Transport { attempts, message },
        })
    }
}
