//! Token vocabulary shared by every dialogue in the crate.
//!
//! The micro-world vocabulary has ten agent strategy tokens, six user
//! response tokens and one explicit end-of-sequence token. Larger
//! vocabularies (for multi-token utterances) are built with
//! [`Vocabulary::new`].

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u16);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub surface: String,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VocabError {
    #[error("vocabulary must contain at least one token besides EOS")]
    Empty,
    #[error("token surface at index {0} is empty")]
    EmptySurface(usize),
    #[error("duplicate token surface `{0}`")]
    Duplicate(String),
    #[error("token id {0} out of range for vocabulary of size {1}")]
    OutOfRange(u16, usize),
}

/// A finite vocabulary with exactly one reserved EOS token (always the last id).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<Token>,
}

pub const EOS_SURFACE: &str = "<EOS>";

impl Vocabulary {
    pub fn new<S: AsRef<str>>(surfaces: &[S]) -> Result<Self, VocabError> {
        if surfaces.is_empty() {
            return Err(VocabError::Empty);
        }
        let mut tokens = Vec::with_capacity(surfaces.len() + 1);
        for (i, s) in surfaces.iter().enumerate() {
            let s = s.as_ref();
            if s.is_empty() {
                return Err(VocabError::EmptySurface(i));
            }
            if s == EOS_SURFACE || tokens.iter().any(|t: &Token| t.surface == s) {
                return Err(VocabError::Duplicate(s.to_string()));
            }
            tokens.push(Token { id: TokenId(i as u16), surface: s.to_string() });
        }
        tokens.push(Token { id: TokenId(surfaces.len() as u16), surface: EOS_SURFACE.to_string() });
        Ok(Self { tokens })
    }

    /// The micro-world vocabulary: agent actions, then user responses, then EOS.
    pub fn micro() -> Self {
        let mut surfaces: Vec<&str> = AgentAction::ALL.iter().map(|a| a.name()).collect();
        surfaces.extend(UserResponse::ALL.iter().map(|r| r.name()));
        Self::new(&surfaces).expect("micro vocabulary is well-formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eos(&self) -> TokenId {
        self.tokens.last().expect("non-empty").id
    }

    pub fn get(&self, id: TokenId) -> Result<&Token, VocabError> {
        self.tokens.get(id.index()).ok_or(VocabError::OutOfRange(id.0, self.tokens.len()))
    }

    pub fn lookup(&self, surface: &str) -> Option<TokenId> {
        self.tokens.iter().find(|t| t.surface == surface).map(|t| t.id)
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.tokens.len()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }
}

/// The ten agent strategy tokens of the micro-world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    Greet,
    Inquire,
    EmotionalAppeal,
    LogicalAppeal,
    CredibilityInfo,
    AddressConcern,
    AskSmall,
    AskLarge,
    Concede,
    Close,
}

impl AgentAction {
    pub const COUNT: usize = 10;
    pub const ALL: [AgentAction; 10] = [
        AgentAction::Greet,
        AgentAction::Inquire,
        AgentAction::EmotionalAppeal,
        AgentAction::LogicalAppeal,
        AgentAction::CredibilityInfo,
        AgentAction::AddressConcern,
        AgentAction::AskSmall,
        AgentAction::AskLarge,
        AgentAction::Concede,
        AgentAction::Close,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentAction::Greet => "greet",
            AgentAction::Inquire => "inquire",
            AgentAction::EmotionalAppeal => "emotional_appeal",
            AgentAction::LogicalAppeal => "logical_appeal",
            AgentAction::CredibilityInfo => "credibility_info",
            AgentAction::AddressConcern => "address_concern",
            AgentAction::AskSmall => "ask_small",
            AgentAction::AskLarge => "ask_large",
            AgentAction::Concede => "concede",
            AgentAction::Close => "close",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Token id in [`Vocabulary::micro`].
    pub fn token(self) -> TokenId {
        TokenId(self as u16)
    }

    pub fn from_token(id: TokenId) -> Option<Self> {
        Self::from_index(id.index())
    }

    pub fn is_ask(self) -> bool {
        matches!(self, AgentAction::AskSmall | AgentAction::AskLarge)
    }
}

impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The six user response tokens of the micro-world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserResponse {
    Positive,
    Neutral,
    Negative,
    ObjectionWaste,
    ObjectionTime,
    Question,
}

impl UserResponse {
    pub const COUNT: usize = 6;
    pub const ALL: [UserResponse; 6] = [
        UserResponse::Positive,
        UserResponse::Neutral,
        UserResponse::Negative,
        UserResponse::ObjectionWaste,
        UserResponse::ObjectionTime,
        UserResponse::Question,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UserResponse::Positive => "positive",
            UserResponse::Neutral => "neutral",
            UserResponse::Negative => "negative",
            UserResponse::ObjectionWaste => "objection_waste",
            UserResponse::ObjectionTime => "objection_time",
            UserResponse::Question => "question",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn token(self) -> TokenId {
        TokenId((AgentAction::COUNT + self as usize) as u16)
    }

    pub fn from_token(id: TokenId) -> Option<Self> {
        id.index().checked_sub(AgentAction::COUNT).and_then(Self::from_index)
    }

    pub fn is_objection(self) -> bool {
        matches!(self, UserResponse::ObjectionWaste | UserResponse::ObjectionTime)
    }
}

impl fmt::Display for UserResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// EOS id in [`Vocabulary::micro`].
pub const MICRO_EOS: TokenId = TokenId((AgentAction::COUNT + UserResponse::COUNT) as u16);
/// Size of [`Vocabulary::micro`].
pub const MICRO_VOCAB_SIZE: usize = AgentAction::COUNT + UserResponse::COUNT + 1;
