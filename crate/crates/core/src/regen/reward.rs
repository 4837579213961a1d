//! Proxy reward: nearest-neighbor regression against labeled dialogues.

use super::{RegenError, RewardModel};
use crate::dialogue::{Dialogue, Domain, Role};
use crate::hashing::{hash_json, read_artifact, write_artifact};
use crate::vocab::{AgentAction, UserResponse};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const REWARD_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardModelKind {
    KnnProxy,
    LlmFewshot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardModelSpec {
    pub kind: RewardModelKind,
    pub k: usize,
    pub fewshot_count: usize,
}

impl RewardModelSpec {
    pub fn knn(k: usize) -> Self {
        Self { kind: RewardModelKind::KnnProxy, k, fewshot_count: 0 }
    }

    /// Few-shot counts match the prompt templates: ten labeled examples for
    /// counseling, five for persuasion.
    pub fn llm(domain: Domain) -> Self {
        let fewshot_count = match domain {
            Domain::Persuasion => 5,
            Domain::Counseling => 10,
        };
        Self { kind: RewardModelKind::LlmFewshot, k: 1, fewshot_count }
    }

    pub fn validate(&self) -> Result<(), RegenError> {
        if self.k == 0 {
            return Err(RegenError::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// A dialogue is finished when the agent closed or used its last turn, and
/// the user has answered.
pub fn is_finished(d: &Dialogue) -> bool {
    let Some(last) = d.turns.last() else { return false };
    if last.role != Role::User {
        return false;
    }
    let closed = d
        .turns
        .iter()
        .rev()
        .find(|t| t.role == Role::Agent)
        .is_some_and(|t| t.tokens.last() == Some(&AgentAction::Close.token()));
    closed || d.agent_turns() >= d.domain.turn_limit()
}

const WINDOW: usize = 2;
const WINDOW_WEIGHT: f64 = 2.0;
const INTENSITY_WEIGHT: f64 = 4.0;

/// Action counts, response counts, a one-hot window over the final user
/// responses, and (counseling) the start intensity.
pub fn dialogue_features(d: &Dialogue) -> Vec<f64> {
    let mut x = vec![0.0; AgentAction::COUNT + UserResponse::COUNT];
    let mut responses = Vec::new();
    for t in &d.turns {
        for &tok in &t.tokens {
            if let Some(a) = AgentAction::from_token(tok) {
                x[a.index()] += 1.0;
            } else if let Some(r) = UserResponse::from_token(tok) {
                x[AgentAction::COUNT + r.index()] += 1.0;
                responses.push(r);
            }
        }
    }
    for k in 0..WINDOW {
        let mut slot = [0.0; UserResponse::COUNT];
        if let Some(r) = responses.iter().rev().nth(k) {
            slot[r.index()] = WINDOW_WEIGHT;
        }
        x.extend(slot);
    }
    if d.domain == Domain::Counseling {
        x.push(INTENSITY_WEIGHT * d.meta.initial_intensity.unwrap_or(0) as f64);
    }
    x
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnRewardModel {
    pub spec: RewardModelSpec,
    pub domain: Domain,
    pub features: Vec<Vec<f64>>,
    /// Donation amount (persuasion) or final intensity (counseling).
    pub targets: Vec<f64>,
    pub corpus_hash: String,
}

impl KnnRewardModel {
    pub fn fit(references: &[Dialogue], spec: RewardModelSpec) -> Result<Self, RegenError> {
        spec.validate()?;
        let domain = references.first().ok_or(RegenError::NoReferences)?.domain;
        let mut features = Vec::with_capacity(references.len());
        let mut targets = Vec::with_capacity(references.len());
        for d in references {
            if d.domain != domain {
                return Err(RegenError::Config("reward references mix domains".into()));
            }
            let r = d.reward.ok_or_else(|| crate::dialogue::DialogueError::Unlabeled(d.id.clone()))?;
            let target = match domain {
                Domain::Persuasion => r,
                Domain::Counseling => initial_intensity(d)? - r,
            };
            features.push(dialogue_features(d));
            targets.push(target);
        }
        Ok(Self { spec, domain, features, targets, corpus_hash: hash_json(references) })
    }

    /// Mean target of the `k` nearest references; ties go to the earlier one.
    pub fn predict_target(&self, x: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.spec.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        dist[..k].iter().map(|(_, i)| self.targets[*i]).sum::<f64>() / k as f64
    }

    pub fn save(&self, path: &Path) -> Result<String, RegenError> {
        Ok(write_artifact(path, "reward_model", REWARD_FORMAT_VERSION, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, RegenError> {
        Ok(read_artifact(path, "reward_model", REWARD_FORMAT_VERSION)?)
    }
}

fn initial_intensity(d: &Dialogue) -> Result<f64, RegenError> {
    d.meta
        .initial_intensity
        .map(f64::from)
        .ok_or_else(|| RegenError::Config(format!("counseling dialogue `{}` has no initial intensity", d.id)))
}

impl RewardModel for KnnRewardModel {
    fn label(&self, dialogue: &Dialogue) -> Result<f64, RegenError> {
        if !is_finished(dialogue) {
            return Err(RegenError::Unfinished(dialogue.id.clone()));
        }
        let t = self.predict_target(&dialogue_features(dialogue));
        let r = match self.domain {
            Domain::Persuasion => t,
            Domain::Counseling => initial_intensity(dialogue)? - t,
        };
        if !self.domain.reward_in_range(r) {
            return Err(RegenError::RewardOutOfRange(r));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{Source, Turn};

    fn dlg(id: &str, steps: &[(AgentAction, UserResponse)], reward: f64) -> Dialogue {
        let mut d = Dialogue::new(id, Domain::Persuasion, Source::Orig);
        for (a, r) in steps {
            d.turns.push(Turn::agent(vec![a.token()]));
            d.turns.push(Turn::user(vec![r.token()]));
        }
        d.reward = Some(reward);
        d
    }

    #[test]
    fn nearest_neighbor_identity() {
        let refs = vec![
            dlg("a", &[(AgentAction::Greet, UserResponse::Neutral), (AgentAction::Close, UserResponse::Negative)], 0.0),
            dlg("b", &[(AgentAction::AskSmall, UserResponse::Question), (AgentAction::Close, UserResponse::Positive)], 1.5),
        ];
        let m = KnnRewardModel::fit(&refs, RewardModelSpec::knn(1)).unwrap();
        for d in &refs {
            assert_eq!(m.label(d).unwrap(), d.reward.unwrap());
        }
    }

    #[test]
    fn unfinished_dialogues_are_rejected() {
        let refs = vec![dlg("a", &[(AgentAction::Close, UserResponse::Neutral)], 1.0)];
        let m = KnnRewardModel::fit(&refs, RewardModelSpec::knn(1)).unwrap();
        let open = dlg("o", &[(AgentAction::Greet, UserResponse::Neutral)], 0.0);
        assert!(matches!(m.label(&open), Err(RegenError::Unfinished(_))));
        let mut no_reply = refs[0].clone();
        no_reply.turns.pop();
        assert!(!is_finished(&no_reply));
        assert!(matches!(KnnRewardModel::fit(&[], RewardModelSpec::knn(1)), Err(RegenError::NoReferences)));
        assert!(matches!(KnnRewardModel::fit(&refs, RewardModelSpec::knn(0)), Err(RegenError::Config(_))));
    }

    #[test]
    fn counseling_predicts_final_intensity() {
        let mut a = dlg("a", &[(AgentAction::Inquire, UserResponse::Positive), (AgentAction::Close, UserResponse::Positive)], 3.0);
        a.domain = Domain::Counseling;
        a.meta.initial_intensity = Some(4);
        let m = KnnRewardModel::fit(&[a.clone()], RewardModelSpec::knn(1)).unwrap();
        // Same conversation from a milder start: same predicted final intensity (1).
        let mut b = a.clone();
        b.meta.initial_intensity = Some(2);
        assert_eq!(m.label(&b).unwrap(), 1.0);
        b.meta.initial_intensity = None;
        assert!(matches!(m.label(&b), Err(RegenError::Config(_))));
    }
}
