//! Scripted behavior policies that generate the original corpus.
//!
//! The scripts almost never answer an objection with `address_concern`,
//! and in counseling they offer suggestions before asking about the
//! problem, so the generated corpus is suboptimal by construction.

use super::sim::sample_index;
use super::world::World;
use crate::dialogue::{Dialogue, Domain, Role};
use crate::vocab::{AgentAction, UserResponse};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BehaviorError {
    #[error("unknown behavior policy `{0}`")]
    UnknownPolicy(String),
    #[error("epsilon must lie in [0, 1] (got {0})")]
    Epsilon(f64),
}

/// One deterministic script.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Script {
    GreeterThenAsk,
    EmotionalOnly,
    LogicalOnly,
    Random,
}

impl Script {
    pub const ALL: [Script; 4] = [Script::GreeterThenAsk, Script::EmotionalOnly, Script::LogicalOnly, Script::Random];

    pub fn id(self) -> &'static str {
        match self {
            Script::GreeterThenAsk => "greeter_then_ask",
            Script::EmotionalOnly => "emotional_only",
            Script::LogicalOnly => "logical_only",
            Script::Random => "random",
        }
    }
}

/// A behavior policy: a single script or the default mixture, plus ε-noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPolicy {
    /// Script weights in [`Script::ALL`] order.
    pub weights: [f64; 4],
    pub epsilon: f64,
}

pub const DEFAULT_MIXTURE: [f64; 4] = [0.4, 0.2, 0.25, 0.15];
pub const DEFAULT_EPSILON: f64 = 0.1;

impl Default for BehaviorPolicy {
    fn default() -> Self {
        Self { weights: DEFAULT_MIXTURE, epsilon: DEFAULT_EPSILON }
    }
}

impl BehaviorPolicy {
    /// `mixture` or one of the script ids.
    pub fn from_id(id: &str, epsilon: f64) -> Result<Self, BehaviorError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(BehaviorError::Epsilon(epsilon));
        }
        let weights = if id == "mixture" {
            DEFAULT_MIXTURE
        } else {
            let s = Script::ALL.iter().position(|s| s.id() == id).ok_or_else(|| BehaviorError::UnknownPolicy(id.into()))?;
            let mut w = [0.0; 4];
            w[s] = 1.0;
            w
        };
        Ok(Self { weights, epsilon })
    }

    /// Picks the script that drives one episode.
    pub fn start_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> Script {
        Script::ALL[sample_index(&self.weights, rng)]
    }

    pub fn act<R: Rng + ?Sized>(&self, script: Script, history: &Visible, domain: Domain, rng: &mut R) -> AgentAction {
        if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            return AgentAction::ALL[rng.random_range(0..AgentAction::COUNT)];
        }
        script_act(script, history, domain, rng)
    }

    /// Rolls out one episode in `world`.
    pub fn rollout<R: Rng + ?Sized>(&self, world: &World, id: impl Into<String>, rng: &mut R) -> Dialogue {
        let script = self.start_episode(rng);
        let domain = world.domain();
        let (mut d, _) = world.rollout(id, rng, |d, _, rng| self.act(script, &Visible::from_dialogue(d), domain, rng));
        d.meta.extra.insert("script".into(), script.id().into());
        d
    }

    /// `n` episodes with ids `{prefix}{i:06}`; episode `i` is seeded from
    /// `(seed, i)`, so the corpus does not depend on thread scheduling.
    pub fn collect(&self, world: &World, n: usize, seed: u64, prefix: &str) -> Vec<Dialogue> {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = super::sim::rng_from(super::sim::derive_seed(seed, i as u64));
                self.rollout(world, format!("{prefix}{i:06}"), &mut rng)
            })
            .collect()
    }
}

/// Action distribution of one script under ε-noise.
pub fn script_probs(script: Script, history: &Visible, domain: Domain, epsilon: f64) -> [f64; AgentAction::COUNT] {
    let mut p = [epsilon / AgentAction::COUNT as f64; AgentAction::COUNT];
    if script == Script::Random {
        return [1.0 / AgentAction::COUNT as f64; AgentAction::COUNT];
    }
    // Non-random scripts never touch the generator.
    let a = script_act(script, history, domain, &mut super::sim::rng_from(0));
    p[a.index()] += 1.0 - epsilon;
    p
}

impl FromStr for BehaviorPolicy {
    type Err = BehaviorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_id(s, DEFAULT_EPSILON)
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// The agent-visible part of a micro-world dialogue.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Visible {
    pub actions: Vec<AgentAction>,
    pub responses: Vec<UserResponse>,
}

impl Visible {
    pub fn from_dialogue(d: &Dialogue) -> Self {
        let mut v = Visible::default();
        for t in &d.turns {
            for &tok in &t.tokens {
                match t.role {
                    Role::Agent => v.actions.extend(AgentAction::from_token(tok)),
                    Role::User => v.responses.extend(UserResponse::from_token(tok)),
                }
            }
        }
        v
    }

    pub fn turn(&self) -> usize {
        self.actions.len()
    }

    pub fn last_response(&self) -> Option<UserResponse> {
        self.responses.last().copied()
    }

    pub fn has(&self, a: AgentAction) -> bool {
        self.actions.contains(&a)
    }
}

fn script_act<R: Rng + ?Sized>(script: Script, v: &Visible, domain: Domain, rng: &mut R) -> AgentAction {
    use AgentAction::*;
    let t = v.turn();
    let last = v.last_response();
    let last_action = v.actions.last().copied();
    let limit = domain.turn_limit();
    match (script, domain) {
        (Script::Random, _) => AgentAction::ALL[rng.random_range(0..AgentAction::COUNT)],

        (Script::GreeterThenAsk, Domain::Persuasion) => match t {
            0 => Greet,
            1 => Inquire,
            2 => CredibilityInfo,
            3 => LogicalAppeal,
            _ if last_action.is_some_and(|a| a.is_ask()) && last == Some(UserResponse::Positive) => Close,
            _ if t + 1 >= limit => Close,
            _ if last == Some(UserResponse::Negative) => AskSmall,
            _ if t.is_multiple_of(2) => AskLarge,
            _ => AskSmall,
        },
        (Script::EmotionalOnly, Domain::Persuasion) => match t {
            0 => Greet,
            5 => AskSmall,
            8 => Close,
            _ => EmotionalAppeal,
        },
        (Script::LogicalOnly, Domain::Persuasion) => match t {
            6 => AskLarge,
            7 if last == Some(UserResponse::Negative) => AskSmall,
            8 => Close,
            _ if t.is_multiple_of(2) => LogicalAppeal,
            _ => CredibilityInfo,
        },

        // Counseling: suggestion-first scripts.
        (Script::GreeterThenAsk, Domain::Counseling) => match t {
            0 => Greet,
            1 => LogicalAppeal,
            2 => AskSmall,
            3 => CredibilityInfo,
            4 => Inquire,
            12 => Close,
            _ if last == Some(UserResponse::Negative) => EmotionalAppeal,
            _ if t.is_multiple_of(2) => AskSmall,
            _ => LogicalAppeal,
        },
        (Script::EmotionalOnly, Domain::Counseling) => match t {
            0 => Greet,
            10 => Close,
            _ => EmotionalAppeal,
        },
        (Script::LogicalOnly, Domain::Counseling) => match t {
            9 => Inquire,
            13 => Close,
            _ if t.is_multiple_of(3) => CredibilityInfo,
            _ if t % 3 == 1 => LogicalAppeal,
            _ => AskLarge,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microworld::config::SimConfig;
    use crate::microworld::sim::rng_from;

    #[test]
    fn full_noise_is_uniform() {
        let p = BehaviorPolicy::from_id("emotional_only", 1.0).unwrap();
        let mut rng = rng_from(3);
        let mut counts = [0usize; AgentAction::COUNT];
        let n = 50_000;
        for _ in 0..n {
            counts[p.act(Script::EmotionalOnly, &Visible::default(), Domain::Persuasion, &mut rng).index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.1).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn emotional_only_never_uses_logic() {
        let p = BehaviorPolicy::from_id("emotional_only", 0.0).unwrap();
        for domain in [Domain::Persuasion, Domain::Counseling] {
            let world = World::new(SimConfig::for_domain(domain)).unwrap();
            let mut rng = rng_from(11);
            for i in 0..200 {
                let d = p.rollout(&world, format!("e{i}"), &mut rng);
                assert!(!Visible::from_dialogue(&d).has(AgentAction::LogicalAppeal));
            }
        }
    }

    #[test]
    fn unknown_policy_is_rejected() {
        assert_eq!(BehaviorPolicy::from_id("nope", 0.1), Err(BehaviorError::UnknownPolicy("nope".into())));
        assert!(BehaviorPolicy::from_id("mixture", 1.5).is_err());
    }

    #[test]
    fn mixture_rarely_addresses_objections() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        let p = BehaviorPolicy::default();
        let mut rng = rng_from(5);
        let (mut after, mut addressed) = (0usize, 0usize);
        for i in 0..1000 {
            let v = Visible::from_dialogue(&p.rollout(&world, format!("d{i}"), &mut rng));
            for k in 1..v.actions.len() {
                if v.responses[k - 1].is_objection() {
                    after += 1;
                    addressed += (v.actions[k] == AgentAction::AddressConcern) as usize;
                }
            }
        }
        assert!(after > 100);
        assert!((addressed as f64) < 0.1 * after as f64, "{addressed}/{after}");
    }
}
