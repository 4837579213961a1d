//! Stochastic simulated users.

use super::config::PersonaName;
use super::world::{grid_units, snap, Hidden, World, GRID_LEVELS};
use crate::dialogue::{Dialogue, Domain, Source, Turn};
use crate::vocab::{AgentAction, UserResponse};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("episode not finished yet")]
    NotFinished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatorState {
    pub domain: Domain,
    pub persona: PersonaName,
    pub hidden: Hidden,
    /// Counseling only.
    pub initial_intensity: Option<u8>,
    pub turn: usize,
    pub turn_limit: usize,
    pub done: bool,
}

impl SimulatorState {
    pub fn rapport(&self) -> f64 {
        self.hidden.rapport as f64 / 10.0
    }

    pub fn willingness(&self) -> Option<f64> {
        (self.domain == Domain::Persuasion).then(|| self.hidden.level as f64 / 10.0)
    }

    pub fn intensity(&self) -> Option<u8> {
        (self.domain == Domain::Counseling).then_some(self.hidden.level)
    }

    pub fn objection_pending(&self) -> bool {
        self.hidden.pending
    }
}

/// Deterministic per-stream RNG used throughout the crate.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a seed from a base seed and a string key (e.g. a dialogue id).
pub fn derive_seed_str(base: u64, key: &str) -> u64 {
    let h = key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    derive_seed(base, h)
}

pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

impl World {
    /// Draws a persona (and counseling start intensity) and returns the start state.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> SimulatorState {
        let persona = PersonaName::ALL[sample_index(&self.mix, rng)];
        let initial_intensity = match self.domain() {
            Domain::Persuasion => None,
            Domain::Counseling => {
                let opts = &self.config.initial_intensity;
                Some(opts[rng.random_range(0..opts.len())])
            }
        };
        self.start_state(persona, initial_intensity)
    }

    pub fn reset_seeded(&self, seed: u64) -> SimulatorState {
        self.reset(&mut rng_from(seed))
    }

    pub fn start_state(&self, persona: PersonaName, initial_intensity: Option<u8>) -> SimulatorState {
        SimulatorState {
            domain: self.domain(),
            persona,
            hidden: self.initial_hidden(persona, initial_intensity),
            initial_intensity,
            turn: 0,
            turn_limit: self.turn_limit(),
            done: false,
        }
    }

    fn sample_grid<R: Rng + ?Sized>(&self, level: u8, d: f64, rng: &mut R) -> u8 {
        if d == 0.0 {
            return level;
        }
        let step = self.config.grid_step;
        let mu = level as f64 + grid_units(d, step);
        let s = self.config.noise_sigma / step;
        let z: f64 = if s > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        snap(mu + s * z, 0, GRID_LEVELS)
    }

    fn sample_level<R: Rng + ?Sized>(&self, level: u8, d: f64, rng: &mut R) -> u8 {
        match self.domain() {
            Domain::Persuasion => self.sample_grid(level, d, rng),
            Domain::Counseling => {
                if d == 0.0 {
                    return level;
                }
                let u: f64 = rng.random();
                if u < d.abs() {
                    if d > 0.0 {
                        (level + 1).min(5)
                    } else {
                        level.saturating_sub(1).max(1)
                    }
                } else {
                    level
                }
            }
        }
    }

    /// Applies one agent move and samples the user's response.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &SimulatorState,
        action: AgentAction,
        rng: &mut R,
    ) -> Result<(UserResponse, SimulatorState), SimError> {
        if state.done {
            return Err(SimError::EpisodeFinished);
        }
        let [dr, dl] = self.delta(state.persona, &state.hidden, action);
        let (pending, inquired) = World::post_move_flags(&state.hidden, action);
        let rapport = self.sample_grid(state.hidden.rapport, dr, rng);
        let level = self.sample_level(state.hidden.level, dl, rng);
        let moved = Hidden { rapport, level, pending, inquired };
        let row = self.response_row(state.persona, self.bucket(&moved), action);
        let response = UserResponse::ALL[sample_index(row, rng)];
        let turn = state.turn + 1;
        let next = SimulatorState {
            hidden: Hidden { pending: pending || response.is_objection(), ..moved },
            turn,
            done: action == AgentAction::Close || turn >= state.turn_limit,
            ..state.clone()
        };
        Ok((response, next))
    }

    pub fn episode_reward(&self, state: &SimulatorState) -> Result<f64, SimError> {
        if !state.done {
            return Err(SimError::NotFinished);
        }
        Ok(self.terminal_reward(&state.hidden, state.initial_intensity))
    }

    /// Runs one episode with `choose` picking each move from the visible history.
    pub fn rollout<R, F>(&self, id: impl Into<String>, rng: &mut R, mut choose: F) -> (Dialogue, SimulatorState)
    where
        R: Rng + ?Sized,
        F: FnMut(&Dialogue, &SimulatorState, &mut R) -> AgentAction,
    {
        let mut state = self.reset(rng);
        let mut dialogue = Dialogue::new(id, self.domain(), Source::Orig);
        dialogue.meta.persona = Some(state.persona.name().to_string());
        dialogue.meta.initial_intensity = state.initial_intensity;
        while !state.done {
            let action = choose(&dialogue, &state, rng);
            let (response, next) = self.step(&state, action, rng).expect("loop guards on done");
            dialogue.turns.push(Turn::agent(vec![action.token()]));
            dialogue.turns.push(Turn::user(vec![response.token()]));
            state = next;
        }
        dialogue.reward = Some(self.terminal_reward(&state.hidden, state.initial_intensity));
        (dialogue, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microworld::config::SimConfig;

    fn world() -> World {
        World::new(SimConfig::persuasion()).unwrap()
    }

    #[test]
    fn degenerate_mix_always_skeptical() {
        let w = World::new(SimConfig::persuasion().with_mix([0.0, 0.0, 0.0, 1.0])).unwrap();
        for seed in 0..200 {
            assert_eq!(w.reset_seeded(seed).persona, PersonaName::Skeptical);
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let w = world();
        assert_eq!(w.reset_seeded(42), w.reset_seeded(42));
    }

    #[test]
    fn uniform_mix_frequencies() {
        let w = world();
        let mut rng = rng_from(7);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[w.reset(&mut rng).persona.index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn close_ends_the_episode_and_steps_after_done_fail() {
        let w = world();
        let mut rng = rng_from(1);
        let s = w.reset(&mut rng);
        let (_, s) = w.step(&s, AgentAction::Close, &mut rng).unwrap();
        assert!(s.done);
        assert_eq!(w.step(&s, AgentAction::Greet, &mut rng), Err(SimError::EpisodeFinished));
    }

    #[test]
    fn reward_before_done_is_error() {
        let w = world();
        let s = w.reset_seeded(3);
        assert_eq!(w.episode_reward(&s), Err(SimError::NotFinished));
    }

    #[test]
    fn terminal_rewards() {
        let w = world();
        let mut s = w.start_state(PersonaName::Caring, None);
        s.done = true;
        s.hidden.level = 0;
        assert_eq!(w.episode_reward(&s).unwrap(), 0.0);
        s.hidden.level = 10;
        assert_eq!(w.episode_reward(&s).unwrap(), 2.0);

        let c = World::new(SimConfig::counseling()).unwrap();
        let mut s = c.start_state(PersonaName::Caring, Some(4));
        s.done = true;
        s.hidden.level = 2;
        assert_eq!(c.episode_reward(&s).unwrap(), 2.0);
    }

    #[test]
    fn turn_limit_terminates() {
        let w = world();
        let mut rng = rng_from(9);
        let (d, s) = w.rollout("x", &mut rng, |_, _, _| AgentAction::Inquire);
        assert!(s.done);
        assert_eq!(s.turn, 10);
        assert_eq!(d.agent_turns(), 10);
    }
}
