//! Language-model bridge: prompt templates, output parsers, a chat client,
//! and language-model-backed versions of the three regeneration components.

pub mod client;
pub mod models;
pub mod parse;
pub mod templates;

pub use client::{ChatClient, EndpointConfig};
pub use models::{render_dialogue, LlmController, LlmForwardModel, LlmRewardModel};
pub use parse::{parse_dialogue_lines, parse_hindsight, parse_reward, serialize_triples, CritiqueTriple, RewardParse, RewardStep};
pub use templates::{render, PromptTemplate, TemplateId};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("template `{template}` needs a binding for `{name}`")]
    MissingBinding { template: &'static str, name: String },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unparseable output: {0}")]
    Parse(String),
    #[error("parsed value {0} is out of range")]
    OutOfRange(f64),
    #[error("endpoint returned status {status} after {attempts} attempt(s): {body}")]
    Http { status: u16, attempts: u32, body: String },
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response body: {0}")]
    MalformedResponse(String),
    #[error("invalid exchange or configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Empty means the endpoint's configured model.
    #[serde(default)]
    pub model: String,
}

impl ChatExchange {
    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            Some(m) if m.role == "system" => {}
            _ => return Err(LlmError::Config("first message must have the system role".into())),
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("temperature {} is negative", self.temperature)));
        }
        Ok(())
    }
}

/// Anything that answers a chat exchange with assistant text.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, exchange: &ChatExchange) -> Result<String, LlmError>;
}

/// Parse failures are re-queried this many times before giving up.
pub const PARSE_RETRIES: usize = 2;

/// Sends `exchange` and parses the reply, re-querying on parse failure.
pub fn chat_parsed<T>(
    backend: &dyn ChatBackend,
    exchange: &ChatExchange,
    parse: impl Fn(&str) -> Result<T, LlmError>,
) -> Result<T, LlmError> {
    let mut last = None;
    for _ in 0..=PARSE_RETRIES {
        let text = backend.chat(exchange)?;
        match parse(&text) {
            Ok(v) => return Ok(v),
            Err(e @ (LlmError::Parse(_) | LlmError::OutOfRange(_))) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}
