//! Trained agents and the training entry points that produce them.

use super::bc::{fit_behavior_policy, BehaviorPolicyNet};
use super::dataset::EncodedDataset;
use super::features::FeatureEncoder;
use super::ilql::{extract_policy, train_qv, LossRecord, QvHeads, TrainConfig};
use super::RlError;
use crate::dialogue::{corpus_transitions, Dialogue, Domain};
use crate::hashing::hash_json;
use crate::vocab::TokenId;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ilql,
    Sft,
    Rft,
    Zeroshot,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ilql => "ilql",
            Method::Sft => "sft",
            Method::Rft => "rft",
            Method::Zeroshot => "zeroshot",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = RlError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Method::Ilql, Method::Sft, Method::Rft, Method::Zeroshot]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| RlError::Config(format!("unknown training method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub method: Method,
    pub domain: Domain,
    pub encoder: FeatureEncoder,
    pub config: TrainConfig,
    pub behavior: BehaviorPolicyNet,
    /// Present for value-based methods.
    pub heads: Option<QvHeads>,
    pub corpus_hash: String,
    pub corpus_size: usize,
    pub loss_history: Vec<LossRecord>,
    pub bc_history: Vec<f64>,
    /// Content hash over every other field.
    #[serde(default)]
    pub hash: String,
}

impl Checkpoint {
    pub fn compute_hash(&self) -> String {
        let mut c = self.clone();
        c.hash = String::new();
        hash_json(&c)
    }

    fn sealed(mut self) -> Self {
        self.hash = self.compute_hash();
        self
    }

    /// Behavior-policy distribution at a flat token state.
    pub fn behavior_probs(&self, tokens: &[TokenId]) -> Result<Vec<f64>, RlError> {
        self.behavior.probs(&self.encoder.encode(tokens))
    }

    /// The agent's action distribution at a flat token state.
    pub fn policy(&self, tokens: &[TokenId]) -> Result<Vec<f64>, RlError> {
        self.policy_with_alpha(tokens, self.config.extraction_alpha)
    }

    pub fn policy_with_alpha(&self, tokens: &[TokenId], alpha: f64) -> Result<Vec<f64>, RlError> {
        let x = self.encoder.encode(tokens);
        let beta = self.behavior.probs(&x)?;
        match &self.heads {
            None => Ok(beta),
            Some(h) => Ok(extract_policy(&beta, &h.q_values(&x)?, h.value(&x)?, alpha)),
        }
    }

    pub fn q_values(&self, tokens: &[TokenId]) -> Result<Option<(Vec<f64>, f64)>, RlError> {
        let x = self.encoder.encode(tokens);
        match &self.heads {
            None => Ok(None),
            Some(h) => Ok(Some((h.q_values(&x)?, h.value(&x)?))),
        }
    }

    pub fn with_extraction_alpha(&self, alpha: f64) -> Self {
        let mut c = self.clone();
        c.config.extraction_alpha = alpha;
        c.sealed()
    }

    pub fn save(&self, path: &Path) -> Result<(), RlError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RlError> {
        let c: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(RlError::Config(format!("unsupported checkpoint version {}", c.format_version)));
        }
        let computed = c.compute_hash();
        if computed != c.hash {
            return Err(RlError::HashMismatch { stored: c.hash, computed });
        }
        Ok(c)
    }
}

fn domain_of(dialogues: &[Dialogue]) -> Result<Domain, RlError> {
    let first = dialogues.first().ok_or(RlError::EmptyDataset)?.domain;
    if dialogues.iter().any(|d| d.domain != first) {
        return Err(RlError::Config("training corpus mixes domains".into()));
    }
    Ok(first)
}

pub fn encode_corpus(dialogues: &[Dialogue], enc: &FeatureEncoder) -> Result<EncodedDataset, RlError> {
    let transitions = corpus_transitions(dialogues, enc.eos)?;
    EncodedDataset::from_transitions(&transitions, enc)
}

/// Value-based training: behavior cloning plus Q/V heads.
pub fn train_value_based(method: Method, dialogues: &[Dialogue], cfg: &TrainConfig) -> Result<Checkpoint, RlError> {
    let domain = domain_of(dialogues)?;
    let encoder = FeatureEncoder::micro(domain);
    let data = encode_corpus(dialogues, &encoder)?;
    let (behavior, bc_history) = fit_behavior_policy(&data, cfg)?;
    let (heads, loss_history) = train_qv(&data, cfg)?;
    Ok(Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        method,
        domain,
        encoder,
        config: cfg.clone(),
        behavior,
        heads: Some(heads),
        corpus_hash: hash_json(dialogues),
        corpus_size: dialogues.len(),
        loss_history,
        bc_history,
        hash: String::new(),
    }
    .sealed())
}

pub fn train_ilql(dialogues: &[Dialogue], cfg: &TrainConfig) -> Result<Checkpoint, RlError> {
    train_value_based(Method::Ilql, dialogues, cfg)
}

/// The `⌈n/4⌉` highest-reward dialogues, ties broken by id.
pub fn top_quartile(dialogues: &[Dialogue]) -> Result<Vec<Dialogue>, RlError> {
    quartile(dialogues, true)
}

/// The `⌈n/4⌉` lowest-reward dialogues, ties broken by id.
pub fn bottom_quartile(dialogues: &[Dialogue]) -> Result<Vec<Dialogue>, RlError> {
    quartile(dialogues, false)
}

fn quartile(dialogues: &[Dialogue], highest: bool) -> Result<Vec<Dialogue>, RlError> {
    if dialogues.len() < 4 {
        return Err(RlError::TooFewDialogues(dialogues.len()));
    }
    let mut ranked: Vec<&Dialogue> = dialogues.iter().collect();
    for d in &ranked {
        if d.reward.is_none() {
            return Err(RlError::Dialogue(crate::dialogue::DialogueError::Unlabeled(d.id.clone())));
        }
    }
    ranked.sort_by(|a, b| {
        let by_reward = b.reward.unwrap().total_cmp(&a.reward.unwrap());
        if highest { by_reward } else { by_reward.reverse() }.then_with(|| a.id.cmp(&b.id))
    });
    let k = dialogues.len().div_ceil(4);
    Ok(ranked.into_iter().take(k).cloned().collect())
}

fn behavior_only(method: Method, selected: &[Dialogue], source_hash: String, cfg: &TrainConfig) -> Result<Checkpoint, RlError> {
    let domain = domain_of(selected)?;
    let encoder = FeatureEncoder::micro(domain);
    let data = encode_corpus(selected, &encoder)?;
    let (behavior, bc_history) = fit_behavior_policy(&data, cfg)?;
    Ok(Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        method,
        domain,
        encoder,
        config: cfg.clone(),
        behavior,
        heads: None,
        corpus_hash: source_hash,
        corpus_size: selected.len(),
        loss_history: Vec::new(),
        bc_history,
        hash: String::new(),
    }
    .sealed())
}

/// Behavior cloning on the top quartile by reward.
pub fn train_sft(dialogues: &[Dialogue], cfg: &TrainConfig) -> Result<Checkpoint, RlError> {
    behavior_only(Method::Sft, &top_quartile(dialogues)?, hash_json(dialogues), cfg)
}

/// Behavior cloning on the top quartile of original plus regenerated data.
pub fn train_rft(orig: &[Dialogue], regens: &[Dialogue], cfg: &TrainConfig) -> Result<Checkpoint, RlError> {
    let all: Vec<Dialogue> = orig.iter().chain(regens).cloned().collect();
    behavior_only(Method::Rft, &top_quartile(&all)?, hash_json(&all), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::Source;

    fn labeled(id: &str, r: f64) -> Dialogue {
        let mut d = Dialogue::new(id, Domain::Persuasion, Source::Orig);
        d.reward = Some(r);
        d
    }

    #[test]
    fn quartile_rule() {
        let ds: Vec<Dialogue> = (0..8).map(|i| labeled(&format!("d{i}"), i as f64 / 4.0)).collect();
        let top = top_quartile(&ds).unwrap();
        assert_eq!(top.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["d7", "d6"]);

        let ties: Vec<Dialogue> = ["c", "a", "d", "b"].iter().map(|id| labeled(id, 1.0)).collect();
        assert_eq!(top_quartile(&ties).unwrap()[0].id, "a");

        let odd: Vec<Dialogue> = (0..10).map(|i| labeled(&format!("d{i}"), 0.0)).collect();
        assert_eq!(top_quartile(&odd).unwrap().len(), 3);

        assert!(matches!(top_quartile(&ds[..3]), Err(RlError::TooFewDialogues(3))));

        let bottom = bottom_quartile(&ds).unwrap();
        assert_eq!(bottom.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["d0", "d1"]);
        assert_eq!(bottom_quartile(&ties).unwrap()[0].id, "a");
    }
}
