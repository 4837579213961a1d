//! Regeneration components that delegate to a chat model.
//!
//! These work on dialogue text. For token-only dialogues (the micro-world)
//! each token is shown by its surface name, and controller replacements are
//! only usable when they name an agent action.

use super::parse::{parse_dialogue_lines, parse_hindsight, parse_reward, CritiqueTriple, RewardParse, RewardStep};
use super::{chat_parsed, render, ChatBackend, LlmError, TemplateId};
use crate::dialogue::{Dialogue, Domain, Role, Turn};
use crate::microworld::sim::{derive_seed_str, rng_from};
use crate::regen::{check_agent_turn, ForwardKind, ForwardModel, HindsightController, HindsightProposal, RegenError, RewardModel};
use crate::vocab::{AgentAction, UserResponse, MICRO_EOS};
use rand::seq::index::sample;
use std::collections::BTreeMap;
use std::sync::Arc;

impl From<LlmError> for RegenError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Parse(m) => RegenError::Parse(m),
            LlmError::OutOfRange(v) => RegenError::RewardOutOfRange(v),
            other => RegenError::Llm(other.to_string()),
        }
    }
}

fn turn_text(t: &Turn) -> String {
    if !t.text.is_empty() {
        return t.text.clone();
    }
    t.tokens
        .iter()
        .map(|&tok| match t.role {
            Role::Agent => AgentAction::from_token(tok).map_or("?", |a| a.name()),
            Role::User => UserResponse::from_token(tok).map_or("?", |r| r.name()),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// `AI:` / `H:` transcript of a dialogue, one line per turn.
pub fn render_dialogue(d: &Dialogue) -> String {
    d.turns
        .iter()
        .map(|t| format!("{}: {}", if t.role == Role::Agent { "AI" } else { "H" }, turn_text(t)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn bindings(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn normalize(s: &str) -> String {
    let s = s.trim();
    let s = s.strip_prefix("AI:").unwrap_or(s);
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub struct LlmController {
    backend: Arc<dyn ChatBackend>,
    domain: Domain,
}

impl LlmController {
    pub fn new(backend: Arc<dyn ChatBackend>, domain: Domain) -> Self {
        Self { backend, domain }
    }

    /// Asks for the model's top three critiques of `d`, each anchored to the
    /// agent turn it quotes. Critiques that quote no agent turn are dropped.
    pub fn critique(&self, d: &Dialogue) -> Result<Vec<(usize, CritiqueTriple)>, RegenError> {
        let id = match self.domain {
            Domain::Counseling => TemplateId::HindsightCounseling,
            Domain::Persuasion => TemplateId::HindsightDonation,
        };
        let ex = render(id, &bindings(&[("dialogue", render_dialogue(d))]))?;
        let triples = chat_parsed(self.backend.as_ref(), &ex, parse_hindsight)?;
        Ok(triples
            .into_iter()
            .filter_map(|t| {
                let quoted = normalize(&t.original);
                let turn = d.agent_turn_indices().find(|&i| {
                    let said = normalize(&turn_text(&d.turns[i]));
                    !said.is_empty() && !quoted.is_empty() && (said == quoted || said.contains(&quoted) || quoted.contains(&said))
                })?;
                Some((turn, t))
            })
            .collect())
    }
}

impl HindsightController for LlmController {
    fn propose(&self, d: &Dialogue, turn: usize, n: usize, _seed: u64) -> Result<Vec<HindsightProposal>, RegenError> {
        check_agent_turn(d, turn)?;
        let original = &d.turns[turn];
        let token_only = original.text.is_empty();
        let prefix = d.prefix(turn, MICRO_EOS)?;
        let mut out = Vec::new();
        for (at, t) in self.critique(d)? {
            if at != turn || out.len() == n {
                continue;
            }
            let text = t.replacement.trim();
            let text = text.strip_prefix("AI:").map_or(text, str::trim_start).to_string();
            let (alternative, alternative_text) = if token_only {
                match AgentAction::from_name(&normalize(&text)) {
                    Some(a) => (vec![a.token()], String::new()),
                    None => continue,
                }
            } else {
                (Vec::new(), text)
            };
            if alternative == original.tokens && alternative_text == original.text {
                continue;
            }
            out.push(HindsightProposal {
                prefix: prefix.clone(),
                original_utterance: original.tokens.clone(),
                alternative,
                alternative_text,
                critique: t.critique,
            });
        }
        if out.is_empty() {
            return Err(RegenError::NoProposals);
        }
        Ok(out)
    }
}

pub struct LlmForwardModel {
    backend: Arc<dyn ChatBackend>,
    domain: Domain,
    /// Counseling only: total utterances the completed dialogue may reach.
    pub utterance_budget: usize,
}

impl LlmForwardModel {
    pub fn new(backend: Arc<dyn ChatBackend>, domain: Domain) -> Self {
        Self { backend, domain, utterance_budget: 30 }
    }

    fn exchange(&self, partial: &Dialogue) -> Result<super::ChatExchange, RegenError> {
        let dialogue = render_dialogue(partial);
        let ex = match self.domain {
            Domain::Counseling => {
                let field = |v: &Option<String>, name: &str| {
                    v.clone().ok_or_else(|| RegenError::Config(format!("dialogue `{}` has no {name}", partial.id)))
                };
                let remaining = self.utterance_budget.saturating_sub(partial.turns.len());
                render(
                    TemplateId::ForwardCounseling,
                    &bindings(&[
                        ("problem_type", field(&partial.meta.problem_type, "problem_type")?),
                        ("situation", field(&partial.meta.situation, "situation")?),
                        ("utterance_budget", self.utterance_budget.to_string()),
                        ("remaining_lines", remaining.to_string()),
                        ("dialogue", dialogue),
                    ]),
                )?
            }
            Domain::Persuasion => render(TemplateId::ForwardDonation, &bindings(&[("dialogue", dialogue)]))?,
        };
        Ok(ex)
    }
}

impl ForwardModel for LlmForwardModel {
    fn kind(&self) -> ForwardKind {
        ForwardKind::LlmBacked
    }

    fn complete(&self, partial: &Dialogue, turn_limit: usize, _seed: u64) -> Result<Dialogue, RegenError> {
        if partial.turns.last().is_some_and(|t| t.role != Role::Agent) {
            return Err(RegenError::NotAgentTerminated);
        }
        let turns = partial.agent_turns();
        if turn_limit < turns {
            return Err(RegenError::TurnLimit { limit: turn_limit, turns });
        }
        let ex = self.exchange(partial)?;
        let lines = chat_parsed(self.backend.as_ref(), &ex, |text| {
            let lines = parse_dialogue_lines(text);
            if lines.is_empty() {
                Err(LlmError::Parse("completion has no AI:/H: lines".into()))
            } else {
                Ok(lines)
            }
        })?;
        let mut d = partial.clone();
        let budget = match self.domain {
            Domain::Counseling => self.utterance_budget,
            Domain::Persuasion => usize::MAX,
        };
        for (is_agent, text) in lines {
            let role = if is_agent { Role::Agent } else { Role::User };
            let last = d.turns.last().map(|t| t.role);
            if last == Some(role) {
                if d.turns.len() == partial.turns.len() {
                    // Never edit the given prefix.
                    continue;
                }
                let t = d.turns.last_mut().expect("non-empty");
                t.text.push(' ');
                t.text.push_str(&text);
                continue;
            }
            if d.turns.len() >= budget || (role == Role::Agent && d.agent_turns() >= turn_limit) {
                break;
            }
            d.turns.push(Turn::new(role, text, Vec::new()));
        }
        Ok(d)
    }
}

pub struct LlmRewardModel {
    backend: Arc<dyn ChatBackend>,
    domain: Domain,
    references: Vec<Dialogue>,
    pub fewshot_count: usize,
    pub seed: u64,
}

impl LlmRewardModel {
    /// `references` must carry rewards (and, for counseling, initial
    /// intensities); few-shot examples are drawn from them.
    pub fn new(backend: Arc<dyn ChatBackend>, domain: Domain, references: Vec<Dialogue>, seed: u64) -> Result<Self, RegenError> {
        let references: Vec<Dialogue> = references.into_iter().filter(|d| d.reward.is_some()).collect();
        let fewshot_count = crate::regen::RewardModelSpec::llm(domain).fewshot_count;
        if references.len() < fewshot_count {
            return Err(RegenError::NoReferences);
        }
        Ok(Self { backend, domain, references, fewshot_count, seed })
    }

    fn pick(&self, key: &str, k: usize) -> Vec<&Dialogue> {
        let mut rng = rng_from(derive_seed_str(self.seed, key));
        sample(&mut rng, self.references.len(), k.min(self.references.len())).into_iter().map(|i| &self.references[i]).collect()
    }

    fn counseling(&self, d: &Dialogue) -> Result<f64, RegenError> {
        let init = d.meta.initial_intensity.ok_or_else(|| RegenError::Config(format!("dialogue `{}` has no initial intensity", d.id)))?;
        let block = self
            .pick(&d.id, self.fewshot_count)
            .into_iter()
            .map(|r| {
                let ri = r.meta.initial_intensity.unwrap_or(init);
                let fin = (ri as f64 - r.reward.unwrap_or(0.0)).round();
                format!("{}\nInitial Emotional Intensity: {ri}\nFinal Emotional Intensity: {fin}", render_dialogue(r))
            })
            .collect::<Vec<_>>()
            .join("\n\n");
        let ex = render(
            TemplateId::RewardCounseling,
            &bindings(&[
                ("fewshot_count", self.fewshot_count.to_string()),
                ("fewshot_block", block),
                ("dialogue", render_dialogue(d)),
                ("initial_intensity", init.to_string()),
            ]),
        )?;
        match chat_parsed(self.backend.as_ref(), &ex, |t| parse_reward(t, RewardStep::Counseling))? {
            RewardParse::FinalIntensity(f) => Ok(init as f64 - f as f64),
            other => Err(RegenError::Parse(format!("unexpected {other:?}"))),
        }
    }

    fn donation(&self, d: &Dialogue) -> Result<f64, RegenError> {
        // Step 1: half truncated (unfinished) and half complete examples.
        let refs = self.pick(&format!("{}#finished", d.id), 6);
        let mut entries: Vec<String> = Vec::new();
        for (i, r) in refs.iter().enumerate() {
            if i < refs.len() / 2 {
                let mut cut = (*r).clone();
                cut.turns.truncate((cut.turns.len() / 2).max(1));
                entries.push(format!("{}\nUnfinished: Yes", render_dialogue(&cut)));
            } else {
                entries.push(format!("{}\nUnfinished: No", render_dialogue(r)));
            }
        }
        let ex = render(
            TemplateId::RewardDonationStep1,
            &bindings(&[
                ("fewshot_count", entries.len().to_string()),
                ("fewshot_block", entries.join("\n\n")),
                ("dialogue", render_dialogue(d)),
            ]),
        )?;
        if chat_parsed(self.backend.as_ref(), &ex, |t| parse_reward(t, RewardStep::DonationFinished))? == RewardParse::Unfinished(true) {
            return Err(RegenError::Unfinished(d.id.clone()));
        }
        // Step 2: examples whose mean reward tracks the corpus mean.
        let examples = self.stratified(&d.id);
        let block = examples
            .iter()
            .map(|r| format!("{}\nFinal Donation Amount: {:.1}", render_dialogue(r), r.reward.unwrap_or(0.0)))
            .collect::<Vec<_>>()
            .join("\n\n");
        let ex = render(
            TemplateId::RewardDonationStep2,
            &bindings(&[
                ("fewshot_count", examples.len().to_string()),
                ("fewshot_block", block),
                ("dialogue", render_dialogue(d)),
            ]),
        )?;
        match chat_parsed(self.backend.as_ref(), &ex, |t| parse_reward(t, RewardStep::DonationAmount))? {
            RewardParse::Amount(a) => Ok(a),
            other => Err(RegenError::Parse(format!("unexpected {other:?}"))),
        }
    }

    /// Few-shot examples for the amount prompt, resampled until their mean
    /// reward is within 0.1 of the reference mean (closest draw otherwise).
    pub fn stratified(&self, key: &str) -> Vec<&Dialogue> {
        let mean = self.references.iter().filter_map(|d| d.reward).sum::<f64>() / self.references.len() as f64;
        let score = |set: &[&Dialogue]| (set.iter().filter_map(|d| d.reward).sum::<f64>() / set.len() as f64 - mean).abs();
        let mut best = self.pick(&format!("{key}#amount0"), self.fewshot_count);
        for attempt in 1..200 {
            if score(&best) <= 0.1 {
                break;
            }
            let cand = self.pick(&format!("{key}#amount{attempt}"), self.fewshot_count);
            if score(&cand) < score(&best) {
                best = cand;
            }
        }
        best.sort_by(|a, b| a.reward.unwrap_or(0.0).total_cmp(&b.reward.unwrap_or(0.0)));
        best
    }
}

impl RewardModel for LlmRewardModel {
    fn label(&self, d: &Dialogue) -> Result<f64, RegenError> {
        let r = match self.domain {
            Domain::Counseling => self.counseling(d)?,
            Domain::Persuasion => self.donation(d)?,
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
    use crate::dialogue::Source;
    use std::sync::Mutex;

    struct Scripted(Mutex<Vec<String>>, Mutex<Vec<super::super::ChatExchange>>);

    impl Scripted {
        fn new(replies: &[&str]) -> Arc<Self> {
            Arc::new(Self(Mutex::new(replies.iter().rev().map(|s| s.to_string()).collect()), Mutex::new(Vec::new())))
        }
    }

    impl ChatBackend for Scripted {
        fn chat(&self, ex: &super::super::ChatExchange) -> Result<String, LlmError> {
            self.1.lock().unwrap().push(ex.clone());
            self.0.lock().unwrap().pop().ok_or_else(|| LlmError::Transport { attempts: 1, message: "script exhausted".into() })
        }
    }

    fn text_dialogue() -> Dialogue {
        let mut d = Dialogue::new("t0", Domain::Persuasion, Source::Orig);
        d.turns = vec![
            Turn::new(Role::Agent, "Hi there!", vec![]),
            Turn::new(Role::User, "Hello.", vec![]),
            Turn::new(Role::Agent, "Would you give $2?", vec![]),
            Turn::new(Role::User, "No.", vec![]),
        ];
        d
    }

    #[test]
    fn controller_anchors_critiques_to_turns() {
        let backend = Scripted::new(&["1. \"AI: Would you give $2?\";too pushy;\"AI: Could you spare a little?\"/\n2. \"Hi there!\";flat;\"Hello, friend!\""]);
        let c = LlmController::new(backend.clone(), Domain::Persuasion);
        let props = c.propose(&text_dialogue(), 2, 3, 0).unwrap();
        assert_eq!(props.len(), 1);
        assert_eq!(props[0].alternative_text, "Could you spare a little?");
        assert_eq!(props[0].prefix.end_turn, 2);
    }

    #[test]
    fn parse_failures_are_retried() {
        let backend = Scripted::new(&["garbage", "Final Donation Amount: 1.5"]);
        let ex = render(TemplateId::RewardDonationStep2, &bindings(&[("fewshot_count", "0".into()), ("fewshot_block", "".into()), ("dialogue", "".into())])).unwrap();
        let v = chat_parsed(backend.as_ref(), &ex, |t| parse_reward(t, RewardStep::DonationAmount)).unwrap();
        assert_eq!(v, RewardParse::Amount(1.5));
        let backend = Scripted::new(&["a", "b", "c", "Final Donation Amount: 1.5"]);
        assert!(matches!(chat_parsed(backend.as_ref(), &ex, |t| parse_reward(t, RewardStep::DonationAmount)), Err(LlmError::Parse(_))));
    }

    #[test]
    fn forward_completion_keeps_prefix_and_alternates() {
        let backend = Scripted::new(&["AI: extra agent line\nH: Maybe.\nAI: Just $1?\nH: Fine, $1.\nAI: Thanks!"]);
        let f = LlmForwardModel::new(backend, Domain::Persuasion);
        let mut partial = text_dialogue();
        partial.turns.push(Turn::new(Role::Agent, "Even a little helps.", vec![]));
        let d = f.complete(&partial, 10, 0).unwrap();
        assert_eq!(&d.turns[..5], &partial.turns[..]);
        assert_eq!(d.turns[5].text, "Maybe.");
        assert_eq!(d.turns.len(), 9);
        for w in d.turns.windows(2) {
            assert_ne!(w[0].role, w[1].role);
        }
    }

    #[test]
    fn donation_reward_two_steps() {
        let mut refs = Vec::new();
        for i in 0..20 {
            let mut d = text_dialogue();
            d.id = format!("r{i}");
            d.reward = Some([0.0, 0.0, 0.5, 1.0, 2.0][i % 5]);
            refs.push(d);
        }
        let backend = Scripted::new(&["No", "Final Donation Amount: 1.0", "Yes"]);
        let m = LlmRewardModel::new(backend.clone(), Domain::Persuasion, refs.clone(), 3).unwrap();
        assert_eq!(m.label(&text_dialogue()).unwrap(), 1.0);
        assert!(matches!(m.label(&text_dialogue()), Err(RegenError::Unfinished(_))));
        let sent = backend.1.lock().unwrap();
        assert!(sent[0].messages[1].content.starts_with("Below are 6 completed dialogues"));
        assert!(sent[1].messages[1].content.starts_with("Below are 5 completed dialogues"));
        let mean = refs.iter().map(|d| d.reward.unwrap()).sum::<f64>() / 20.0;
        let picked = m.stratified("x");
        let pm = picked.iter().map(|d| d.reward.unwrap()).sum::<f64>() / picked.len() as f64;
        assert!((pm - mean).abs() <= 0.1);
    }
}
