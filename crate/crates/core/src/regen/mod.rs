//! Hindsight regeneration: a controller that proposes better agent moves
//! in hindsight, a forward model that completes the edited dialogue, and a
//! proxy reward model that labels the result.

pub mod controller;
pub mod forward;
pub mod pipeline;
pub mod reward;

pub use controller::OracleController;
pub use forward::{CountForwardModel, ForwardKind, ForwardModelSpec, TrainingSlice};
pub use pipeline::{
    aggregate, check_invariants, generate_scratch, regenerate_and_label, relabel_dataset, run_pipeline, train_zeroshot, InvariantReport, PipelineConfig,
    PipelineOutput, PipelineStats, RegenRecord, RelabelItem,
};
pub use reward::{KnnRewardModel, RewardModelKind, RewardModelSpec, DEFAULT_K};

use crate::dialogue::{Dialogue, DialogueError, Prefix, Role};
use crate::microworld::OracleError;
use crate::rl::RlError;
use crate::vocab::TokenId;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RegenError {
    #[error("turn {turn} is outside dialogue `{id}`")]
    PrefixNotInDialogue { id: String, turn: usize },
    #[error("turn {turn} of dialogue `{id}` is not an agent turn")]
    NotAgentTurn { id: String, turn: usize },
    #[error("turn limit {limit} is below the {turns} agent turns already present")]
    TurnLimit { limit: usize, turns: usize },
    #[error("partial dialogue must end with an agent turn")]
    NotAgentTerminated,
    #[error("empty training slice for the forward model")]
    EmptySlice,
    #[error("dialogue `{0}` is unfinished")]
    Unfinished(String),
    #[error("reward {0} is outside the valid range")]
    RewardOutOfRange(f64),
    #[error("reward model has no reference dialogues")]
    NoReferences,
    #[error("controller produced no alternatives")]
    NoProposals,
    #[error("language model output could not be parsed: {0}")]
    Parse(String),
    #[error("language model request failed: {0}")]
    Llm(String),
    #[error("duplicate dialogue id `{0}`")]
    IdCollision(String),
    #[error("{failed} of {total} generations failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Artifact(#[from] crate::hashing::ArtifactError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A replacement for one agent utterance, proposed with hindsight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HindsightProposal {
    pub prefix: Prefix,
    pub original_utterance: Vec<TokenId>,
    pub alternative: Vec<TokenId>,
    /// Surface text of the alternative, when it came from a language model.
    #[serde(default)]
    pub alternative_text: String,
    #[serde(default)]
    pub critique: String,
}

pub trait HindsightController: Sync {
    /// Up to `n` alternatives to the agent utterance at `turn` of `dialogue`,
    /// best first, none equal to the original.
    fn propose(&self, dialogue: &Dialogue, turn: usize, n: usize, seed: u64) -> Result<Vec<HindsightProposal>, RegenError>;
}

pub trait ForwardModel: Sync {
    fn kind(&self) -> ForwardKind;

    /// Continues `partial` (empty, or ending with an agent turn) until the
    /// agent closes or `turn_limit` agent turns are reached. The input turns
    /// are preserved verbatim.
    fn complete(&self, partial: &Dialogue, turn_limit: usize, seed: u64) -> Result<Dialogue, RegenError>;

    /// Starting metadata for a dialogue generated from scratch.
    fn sample_meta(&self, seed: u64) -> crate::dialogue::Meta {
        let _ = seed;
        Default::default()
    }
}

pub trait RewardModel: Sync {
    /// Proxy reward for a complete dialogue; unfinished dialogues are
    /// rejected with [`RegenError::Unfinished`].
    fn label(&self, dialogue: &Dialogue) -> Result<f64, RegenError>;
}

/// Checks that `turn` names an agent turn of `dialogue`.
pub fn check_agent_turn(dialogue: &Dialogue, turn: usize) -> Result<(), RegenError> {
    match dialogue.turns.get(turn) {
        None => Err(RegenError::PrefixNotInDialogue { id: dialogue.id.clone(), turn }),
        Some(t) if t.role != Role::Agent => Err(RegenError::NotAgentTurn { id: dialogue.id.clone(), turn }),
        Some(_) => Ok(()),
    }
}
