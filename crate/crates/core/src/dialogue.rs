//! Dialogue data model, its flat token view, and conversion into RL transitions.
//!
//! Dialogues are stored turn-structured. The flat token sequence is always
//! derived: turn tokens in order, with the EOS token appended after every
//! agent turn (the point where the other party's response gets appended).

use crate::vocab::{TokenId, Vocabulary};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::{BTreeMap, HashSet};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Persuasion,
    Counseling,
}

impl Domain {
    /// Turn cap per side: 10 exchanges for persuasion, 15 for counseling.
    pub fn turn_limit(self) -> usize {
        match self {
            Domain::Persuasion => 10,
            Domain::Counseling => 15,
        }
    }

    /// Inclusive range of valid terminal rewards.
    pub fn reward_range(self) -> (f64, f64) {
        match self {
            Domain::Persuasion => (0.0, 2.0),
            Domain::Counseling => (-4.0, 4.0),
        }
    }

    pub fn reward_in_range(self, r: f64) -> bool {
        let (lo, hi) = self.reward_range();
        r.is_finite() && r >= lo && r <= hi
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Persuasion => "persuasion",
            Domain::Counseling => "counseling",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "persuasion" | "donation" => Ok(Domain::Persuasion),
            "counseling" => Ok(Domain::Counseling),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Agent,
    User,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Orig,
    Regen,
    RegenHard,
    Scratch,
}

impl Source {
    pub fn is_regen(self) -> bool {
        matches!(self, Source::Regen | Source::RegenHard)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub tokens: Vec<TokenId>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Turn {
    pub fn new(role: Role, text: impl Into<String>, tokens: Vec<TokenId>) -> Self {
        Self { role, text: text.into(), tokens, extra: Map::new() }
    }

    pub fn agent(tokens: Vec<TokenId>) -> Self {
        Self::new(Role::Agent, String::new(), tokens)
    }

    pub fn user(tokens: Vec<TokenId>) -> Self {
        Self::new(Role::User, String::new(), tokens)
    }

    /// Same role and tokens; text and extra fields are presentation only.
    pub fn same_content(&self, other: &Turn) -> bool {
        self.role == other.role && self.tokens == other.tokens
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub situation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_intensity: Option<u8>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub domain: Domain,
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub meta: Meta,
    #[serde(default)]
    pub reward: Option<f64>,
    pub source: Source,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub relabel_turn: Option<usize>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DialogueError {
    #[error("dialogue `{0}` has no turns")]
    Empty(String),
    #[error("dialogue `{0}` has no reward label")]
    Unlabeled(String),
    #[error("prefix end {end} exceeds turn count {len} of dialogue `{id}`")]
    PrefixOutOfRange { id: String, end: usize, len: usize },
}

impl Dialogue {
    pub fn new(id: impl Into<String>, domain: Domain, source: Source) -> Self {
        Self {
            id: id.into(),
            domain,
            turns: Vec::new(),
            meta: Meta::default(),
            reward: None,
            source,
            parent_id: None,
            relabel_turn: None,
            extra: Map::new(),
        }
    }

    /// Flat token view: all turn tokens with EOS inserted after each agent turn.
    pub fn flatten(&self, eos: TokenId) -> Result<Vec<TokenId>, DialogueError> {
        if self.turns.is_empty() {
            return Err(DialogueError::Empty(self.id.clone()));
        }
        Ok(flatten_turns(&self.turns, eos))
    }

    pub fn agent_turn_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.turns.iter().enumerate().filter(|(_, t)| t.role == Role::Agent).map(|(i, _)| i)
    }

    pub fn agent_token_count(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::Agent).map(|t| t.tokens.len()).sum()
    }

    /// Number of agent turns (exchanges initiated by the agent).
    pub fn agent_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::Agent).count()
    }

    pub fn prefix(&self, end_turn: usize, eos: TokenId) -> Result<Prefix, DialogueError> {
        if end_turn > self.turns.len() {
            return Err(DialogueError::PrefixOutOfRange {
                id: self.id.clone(),
                end: end_turn,
                len: self.turns.len(),
            });
        }
        Ok(Prefix {
            dialogue_id: self.id.clone(),
            end_turn,
            tokens: flatten_turns(&self.turns[..end_turn], eos),
        })
    }

    /// One transition per agent token; the labeled reward sits on the last one.
    pub fn extract_transitions(&self, eos: TokenId) -> Result<Vec<Transition>, DialogueError> {
        let reward = self.reward.ok_or_else(|| DialogueError::Unlabeled(self.id.clone()))?;
        if self.turns.is_empty() {
            return Ok(Vec::new());
        }
        let mut flat = Vec::new();
        let mut agent_positions = Vec::new();
        for turn in &self.turns {
            if turn.role == Role::Agent {
                for &tok in &turn.tokens {
                    agent_positions.push(flat.len());
                    flat.push(tok);
                }
                flat.push(eos);
            } else {
                flat.extend_from_slice(&turn.tokens);
            }
        }
        let n = agent_positions.len();
        let transitions = agent_positions
            .iter()
            .enumerate()
            .map(|(i, &pos)| {
                let last = i + 1 == n;
                let end = if last { flat.len() } else { agent_positions[i + 1] };
                Transition {
                    state: flat[..pos].to_vec(),
                    action: flat[pos],
                    next_state: flat[..end].to_vec(),
                    reward: if last { reward } else { 0.0 },
                    terminal: last,
                }
            })
            .collect();
        Ok(transitions)
    }
}

fn flatten_turns(turns: &[Turn], eos: TokenId) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(turns.iter().map(|t| t.tokens.len() + 1).sum());
    for turn in turns {
        out.extend_from_slice(&turn.tokens);
        if turn.role == Role::Agent {
            out.push(eos);
        }
    }
    out
}

/// The first `end_turn` turns of a dialogue, flattened.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prefix {
    pub dialogue_id: String,
    pub end_turn: usize,
    pub tokens: Vec<TokenId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<TokenId>,
    pub action: TokenId,
    pub next_state: Vec<TokenId>,
    pub reward: f64,
    pub terminal: bool,
}

/// Extracts transitions from every dialogue, in corpus order.
pub fn corpus_transitions(dialogues: &[Dialogue], eos: TokenId) -> Result<Vec<Transition>, DialogueError> {
    let mut out = Vec::new();
    for d in dialogues {
        out.extend(d.extract_transitions(eos)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateId,
    NoTurns,
    EmptyTurn,
    TokenOutOfVocabulary,
    MissingProvenance,
    RelabelTurnOutOfRange,
    InitialIntensityMissing,
    InitialIntensityOutOfRange,
    RewardOutOfRange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub dialogue_id: String,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub dialogues: usize,
    pub turns: usize,
    pub labeled: usize,
    pub by_source: BTreeMap<String, usize>,
    pub counts: BTreeMap<ViolationKind, usize>,
    pub violations: Vec<Violation>,
}

impl CorpusReport {
    pub fn total_violations(&self) -> usize {
        self.violations.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, d: &Dialogue, kind: ViolationKind, detail: String) {
        *self.counts.entry(kind).or_default() += 1;
        self.violations.push(Violation { dialogue_id: d.id.clone(), kind, detail });
    }
}

/// Checks every dialogue invariant and reports violations; never fails.
pub fn validate_corpus(dialogues: &[Dialogue], vocab: &Vocabulary) -> CorpusReport {
    let mut report = CorpusReport::default();
    let mut seen = HashSet::new();
    for d in dialogues {
        report.dialogues += 1;
        report.turns += d.turns.len();
        if d.reward.is_some() {
            report.labeled += 1;
        }
        let source = serde_json::to_value(d.source).ok().and_then(|v| v.as_str().map(str::to_string));
        *report.by_source.entry(source.unwrap_or_default()).or_default() += 1;

        if !seen.insert(d.id.as_str()) {
            report.flag(d, ViolationKind::DuplicateId, d.id.clone());
        }
        if d.turns.is_empty() {
            report.flag(d, ViolationKind::NoTurns, String::new());
        }
        for (i, turn) in d.turns.iter().enumerate() {
            if turn.tokens.is_empty() {
                report.flag(d, ViolationKind::EmptyTurn, format!("turn {i}"));
            }
            if let Some(bad) = turn.tokens.iter().find(|t| !vocab.contains(**t)) {
                report.flag(d, ViolationKind::TokenOutOfVocabulary, format!("turn {i}: {bad}"));
            }
        }
        if d.source.is_regen() {
            if d.parent_id.is_none() || d.relabel_turn.is_none() {
                report.flag(d, ViolationKind::MissingProvenance, format!("{:?}", d.source));
            }
            if let Some(t) = d.relabel_turn {
                if t >= d.turns.len() {
                    report.flag(d, ViolationKind::RelabelTurnOutOfRange, format!("{t} >= {}", d.turns.len()));
                }
            }
        }
        if d.domain == Domain::Counseling {
            match d.meta.initial_intensity {
                None => report.flag(d, ViolationKind::InitialIntensityMissing, String::new()),
                Some(v) if !(1..=5).contains(&v) => {
                    report.flag(d, ViolationKind::InitialIntensityOutOfRange, v.to_string())
                }
                _ => {}
            }
        }
        if let Some(r) = d.reward {
            if !d.domain.reward_in_range(r) {
                report.flag(d, ViolationKind::RewardOutOfRange, r.to_string());
            }
        }
    }
    report
}
