//! Offline RL: behavior cloning, implicit Q-learning, policy extraction and
//! the supervised baselines.

pub mod bc;
pub mod checkpoint;
pub mod dataset;
pub mod features;
pub mod ilql;
pub mod tabular;

pub use bc::{fit_behavior_policy, BehaviorPolicyNet, CountPolicy};
pub use checkpoint::{bottom_quartile, top_quartile, train_ilql, train_rft, train_sft, train_value_based, Checkpoint, Method};
pub use dataset::{Batch, EncodedDataset, OwnedBatch};
pub use features::FeatureEncoder;
pub use ilql::{check_loss_instances, extract_policy, q_loss, train_qv, v_loss, LossRecord, QvHeads, TrainConfig};

use crate::dialogue::DialogueError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum RlError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("need at least 4 dialogues for quartile selection (got {0})")]
    TooFewDialogues(usize),
    #[error("token id {0} is not an agent action")]
    NotAnAction(usize),
    #[error("non-finite reward in training data")]
    NonFiniteReward,
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint hash mismatch: stored {stored}, computed {computed}")]
    HashMismatch { stored: String, computed: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
