//! Count-based forward model: smoothed next-token tables for both speakers,
//! keyed on a short history window with back-off to shorter contexts.

use super::{ForwardModel, RegenError};
use crate::dialogue::{Dialogue, Domain, Meta, Role, Turn};
use crate::hashing::{hash_json, read_artifact, write_artifact};
use crate::microworld::sim::{rng_from, sample_index};
use crate::rl::bottom_quartile;
use crate::vocab::{AgentAction, TokenId, UserResponse};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const FORWARD_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_SMOOTHING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardKind {
    BehaviorCloned,
    BehaviorClonedHard,
    LlmBacked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingSlice {
    All,
    BottomQuartile,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardModelSpec {
    pub kind: ForwardKind,
    pub training_slice: TrainingSlice,
    pub smoothing: f64,
}

impl ForwardModelSpec {
    pub fn standard() -> Self {
        Self { kind: ForwardKind::BehaviorCloned, training_slice: TrainingSlice::All, smoothing: DEFAULT_SMOOTHING }
    }

    pub fn hard() -> Self {
        Self {
            kind: ForwardKind::BehaviorClonedHard,
            training_slice: TrainingSlice::BottomQuartile,
            smoothing: DEFAULT_SMOOTHING,
        }
    }

    pub fn validate(&self) -> Result<(), RegenError> {
        if self.kind == ForwardKind::BehaviorClonedHard && self.training_slice != TrainingSlice::BottomQuartile {
            return Err(RegenError::Config("the hard forward model trains on the bottom quartile".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(RegenError::Config(format!("smoothing must be positive, got {}", self.smoothing)));
        }
        Ok(())
    }
}

/// Back-off levels, most specific first: window plus turn index, then the
/// window, then each shorter suffix down to the empty context.
fn context_keys(history: &[TokenId], turn: usize, window: usize) -> Vec<String> {
    let suffix = |k: usize| -> String {
        let tail = &history[history.len().saturating_sub(k)..];
        let toks: Vec<String> = tail.iter().map(|t| t.0.to_string()).collect();
        format!("{k}|{}", toks.join(","))
    };
    let mut keys = vec![format!("t{turn}:{}", suffix(window))];
    keys.extend((0..=window).rev().map(suffix));
    keys
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub outputs: Vec<TokenId>,
    pub counts: BTreeMap<String, Vec<f64>>,
}

impl CountTable {
    fn new(outputs: Vec<TokenId>) -> Self {
        Self { outputs, counts: BTreeMap::new() }
    }

    fn observe(&mut self, keys: &[String], token: TokenId) {
        let Some(i) = self.outputs.iter().position(|t| *t == token) else { return };
        for k in keys {
            self.counts.entry(k.clone()).or_insert_with(|| vec![0.0; self.outputs.len()])[i] += 1.0;
        }
    }

    /// Smoothed distribution from the most specific context with data;
    /// uniform when nothing matches.
    pub fn probs(&self, keys: &[String], smoothing: f64) -> Vec<f64> {
        let k = self.outputs.len() as f64;
        for key in keys {
            if let Some(c) = self.counts.get(key) {
                let total: f64 = c.iter().sum();
                if total > 0.0 {
                    return c.iter().map(|n| (n + smoothing) / (total + k * smoothing)).collect();
                }
            }
        }
        vec![1.0 / k; self.outputs.len()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountForwardModel {
    pub spec: ForwardModelSpec,
    pub domain: Domain,
    pub window: usize,
    pub close: Option<TokenId>,
    pub agent: CountTable,
    pub user: CountTable,
    /// Start intensities seen in training, for scratch generation.
    pub initial_intensities: Vec<u8>,
    pub corpus_hash: String,
    pub training_size: usize,
}

impl CountForwardModel {
    /// Fits on the micro-world vocabulary.
    pub fn fit(corpus: &[Dialogue], spec: ForwardModelSpec) -> Result<Self, RegenError> {
        spec.validate()?;
        let slice: Vec<Dialogue> = match spec.training_slice {
            TrainingSlice::All => corpus.to_vec(),
            TrainingSlice::BottomQuartile if corpus.is_empty() => Vec::new(),
            TrainingSlice::BottomQuartile => bottom_quartile(corpus)?,
        };
        let domain = slice.first().ok_or(RegenError::EmptySlice)?.domain;
        let mut model = Self {
            spec,
            domain,
            window: DEFAULT_WINDOW,
            close: Some(AgentAction::Close.token()),
            agent: CountTable::new(AgentAction::ALL.iter().map(|a| a.token()).collect()),
            user: CountTable::new(UserResponse::ALL.iter().map(|r| r.token()).collect()),
            initial_intensities: Vec::new(),
            corpus_hash: hash_json(corpus),
            training_size: slice.len(),
        };
        for d in &slice {
            if d.domain != domain {
                return Err(RegenError::Config("forward-model corpus mixes domains".into()));
            }
            model.initial_intensities.extend(d.meta.initial_intensity);
            let mut history = Vec::new();
            let mut agent_turns = 0;
            for turn in &d.turns {
                if turn.role == Role::Agent {
                    agent_turns += 1;
                }
                for &tok in &turn.tokens {
                    let keys = context_keys(&history, agent_turns, model.window);
                    match turn.role {
                        Role::Agent => model.agent.observe(&keys, tok),
                        Role::User => model.user.observe(&keys, tok),
                    }
                    history.push(tok);
                }
            }
        }
        model.initial_intensities.sort_unstable();
        Ok(model)
    }

    /// Next-token distribution for `role` after `history`, where `agent_turns`
    /// counts agent turns up to and including the one being produced or
    /// answered.
    pub fn next_probs(&self, role: Role, history: &[TokenId], agent_turns: usize) -> Vec<f64> {
        let keys = context_keys(history, agent_turns, self.window);
        match role {
            Role::Agent => self.agent.probs(&keys, self.spec.smoothing),
            Role::User => self.user.probs(&keys, self.spec.smoothing),
        }
    }

    pub fn save(&self, path: &Path) -> Result<String, RegenError> {
        Ok(write_artifact(path, "forward_model", FORWARD_FORMAT_VERSION, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, RegenError> {
        Ok(read_artifact(path, "forward_model", FORWARD_FORMAT_VERSION)?)
    }
}

impl ForwardModel for CountForwardModel {
    fn kind(&self) -> ForwardKind {
        self.spec.kind
    }

    fn complete(&self, partial: &Dialogue, turn_limit: usize, seed: u64) -> Result<Dialogue, RegenError> {
        let mut agent_turns = partial.agent_turns();
        if agent_turns > turn_limit {
            return Err(RegenError::TurnLimit { limit: turn_limit, turns: agent_turns });
        }
        if partial.turns.last().is_some_and(|t| t.role != Role::Agent) {
            return Err(RegenError::NotAgentTerminated);
        }
        let mut rng = rng_from(seed);
        let mut out = partial.clone();
        out.reward = None;
        let mut history: Vec<TokenId> = partial.turns.iter().flat_map(|t| t.tokens.iter().copied()).collect();
        loop {
            match out.turns.last() {
                Some(last) if last.role == Role::Agent => {
                    let closed = self.close.is_some_and(|c| last.tokens.last() == Some(&c));
                    let p = self.next_probs(Role::User, &history, agent_turns);
                    let tok = self.user.outputs[sample_index(&p, &mut rng)];
                    out.turns.push(Turn::user(vec![tok]));
                    history.push(tok);
                    if closed || agent_turns >= turn_limit {
                        break;
                    }
                }
                _ => {
                    agent_turns += 1;
                    let p = self.next_probs(Role::Agent, &history, agent_turns);
                    let tok = self.agent.outputs[sample_index(&p, &mut rng)];
                    out.turns.push(Turn::agent(vec![tok]));
                    history.push(tok);
                }
            }
        }
        Ok(out)
    }

    fn sample_meta(&self, seed: u64) -> Meta {
        let mut meta = Meta::default();
        if !self.initial_intensities.is_empty() {
            let mut rng = rng_from(seed);
            meta.initial_intensity = Some(self.initial_intensities[rng.random_range(0..self.initial_intensities.len())]);
        }
        meta
    }
}
