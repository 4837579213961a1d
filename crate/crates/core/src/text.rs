//! Rule-based mapping from free text to micro-world tokens.
//!
//! Used to tokenize imported corpora and to read human messages in the
//! chat server. Rules live in a reviewable TOML file; the bundled set is
//! `config/text_rules.toml`.

use crate::dialogue::Role;
use crate::vocab::{AgentAction, TokenId, UserResponse};
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_RULES: &str = include_str!("../config/text_rules.toml");

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("rules file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad pattern `{pattern}`: {source}")]
    Pattern { pattern: String, source: regex::Error },
    #[error("unknown {role} token `{name}`")]
    UnknownToken { role: &'static str, name: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub token: String,
    pub patterns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextRules {
    pub user_fallback: String,
    pub agent_fallback: String,
    #[serde(default)]
    pub user: Vec<Rule>,
    #[serde(default)]
    pub agent: Vec<Rule>,
    /// Strategy annotation → agent action.
    #[serde(default)]
    pub strategy: BTreeMap<String, String>,
}

impl TextRules {
    pub fn bundled() -> Self {
        toml::from_str(DEFAULT_RULES).expect("bundled text rules parse")
    }
}

struct Compiled<T> {
    token: T,
    patterns: Vec<Regex>,
}

pub struct TextMapper {
    user: Vec<Compiled<UserResponse>>,
    agent: Vec<Compiled<AgentAction>>,
    user_fallback: UserResponse,
    agent_fallback: AgentAction,
    strategy: BTreeMap<String, AgentAction>,
}

fn user_token(name: &str) -> Result<UserResponse, TextError> {
    UserResponse::from_name(name).ok_or_else(|| TextError::UnknownToken { role: "user", name: name.into() })
}

fn agent_token(name: &str) -> Result<AgentAction, TextError> {
    AgentAction::from_name(name).ok_or_else(|| TextError::UnknownToken { role: "agent", name: name.into() })
}

fn compile<T>(rules: &[Rule], parse: impl Fn(&str) -> Result<T, TextError>) -> Result<Vec<Compiled<T>>, TextError> {
    rules
        .iter()
        .map(|r| {
            let patterns = r
                .patterns
                .iter()
                .map(|p| {
                    RegexBuilder::new(p)
                        .case_insensitive(true)
                        .build()
                        .map_err(|source| TextError::Pattern { pattern: p.clone(), source })
                })
                .collect::<Result<_, _>>()?;
            Ok(Compiled { token: parse(&r.token)?, patterns })
        })
        .collect()
}

fn first_match<T: Copy>(rules: &[Compiled<T>], text: &str) -> Option<T> {
    rules.iter().find(|r| r.patterns.iter().any(|p| p.is_match(text))).map(|r| r.token)
}

impl TextMapper {
    pub fn new(rules: &TextRules) -> Result<Self, TextError> {
        Ok(Self {
            user: compile(&rules.user, user_token)?,
            agent: compile(&rules.agent, agent_token)?,
            user_fallback: user_token(&rules.user_fallback)?,
            agent_fallback: agent_token(&rules.agent_fallback)?,
            strategy: rules.strategy.iter().map(|(k, v)| Ok((k.clone(), agent_token(v)?))).collect::<Result<_, TextError>>()?,
        })
    }

    pub fn bundled() -> Self {
        Self::new(&TextRules::bundled()).expect("bundled text rules compile")
    }

    /// The response a user message expresses; unmatched text is the fallback
    /// (neutral in the bundled rules).
    pub fn map_user(&self, text: &str) -> UserResponse {
        first_match(&self.user, text).unwrap_or(self.user_fallback)
    }

    /// The strategy an agent utterance uses, preferring an explicit
    /// annotation when one is known.
    pub fn map_agent(&self, text: &str, annotation: Option<&str>) -> AgentAction {
        annotation
            .and_then(|a| self.strategy.get(a.trim()).copied())
            .or_else(|| first_match(&self.agent, text))
            .unwrap_or(self.agent_fallback)
    }

    pub fn tokenize(&self, role: Role, text: &str, annotation: Option<&str>) -> TokenId {
        match role {
            Role::Agent => self.map_agent(text, annotation).token(),
            Role::User => self.map_user(text).token(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn user_intents() {
        let m = TextMapper::bundled();
        let cases = [
            ("Sorry, I'm really busy right now", UserResponse::ObjectionTime),
            ("How do I know it's not a scam?", UserResponse::ObjectionWaste),
            ("What does the charity do?", UserResponse::Question),
            ("No, not interested.", UserResponse::Negative),
            ("Sure, sounds good", UserResponse::Positive),
            ("hmm", UserResponse::Neutral),
        ];
        for (text, want) in cases {
            assert_eq!(m.map_user(text), want, "{text}");
        }
    }

    #[test]
    fn agent_strategies() {
        let m = TextMapper::bundled();
        assert_eq!(m.map_agent("Hello there, how are you?", None), AgentAction::Greet);
        assert_eq!(m.map_agent("Would you donate a little today?", None), AgentAction::AskSmall);
        assert_eq!(m.map_agent("Thanks, have a great day!", None), AgentAction::Close);
        assert_eq!(m.map_agent("anything", Some("Providing Suggestions")), AgentAction::LogicalAppeal);
        assert_eq!(m.map_agent("I see.", None), AgentAction::EmotionalAppeal);
    }

    #[test]
    fn unknown_tokens_are_rejected() {
        let mut r = TextRules::bundled();
        r.user_fallback = "shrug".into();
        assert!(matches!(TextMapper::new(&r), Err(TextError::UnknownToken { .. })));
    }
}
