//! Compiled world tables and the exact one-step transition kernel.
//!
//! Rapport (and persuasion willingness) live on a 0.1 grid stored as
//! integer levels 0..=10. An update adds the table delta plus Gaussian
//! noise and snaps back to the grid, so the distribution over next levels
//! is available in closed form. The simulator samples from exactly this
//! distribution, which makes the dynamic-programming oracle exact.

use super::config::{Bucket, ConfigError, PersonaName, SimConfig};
use crate::dialogue::Domain;
use crate::vocab::{AgentAction, UserResponse};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub const GRID_LEVELS: u8 = 10;

/// Hidden user state apart from persona and turn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hidden {
    /// Rapport in tenths, 0..=10.
    pub rapport: u8,
    /// Willingness in tenths (persuasion, 0..=10) or intensity (counseling, 1..=5).
    pub level: u8,
    pub pending: bool,
    pub inquired: bool,
}

impl Hidden {
    /// Dense index used by the tabular oracle and belief filter.
    pub fn index(&self) -> usize {
        ((self.rapport as usize * 11 + self.level as usize) * 2 + self.pending as usize) * 2 + self.inquired as usize
    }

    pub const SPACE: usize = 11 * 11 * 2 * 2;

    pub fn from_index(i: usize) -> Self {
        let inquired = i % 2 == 1;
        let pending = (i / 2) % 2 == 1;
        let level = ((i / 4) % 11) as u8;
        let rapport = (i / 44) as u8;
        Self { rapport, level, pending, inquired }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub name: PersonaName,
    pub baseline_rapport: u8,
    pub baseline_level: u8,
    pub delta: [[f64; 2]; AgentAction::COUNT],
    pub pending_delta: [[f64; 2]; AgentAction::COUNT],
    pub uninformed_delta: [[f64; 2]; AgentAction::COUNT],
    /// `response_table[bucket][action]` is a distribution over user responses.
    pub response_table: [[[f64; UserResponse::COUNT]; AgentAction::COUNT]; Bucket::COUNT],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub next: Hidden,
    pub response: UserResponse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub config: SimConfig,
    pub personas: [Persona; 4],
    pub mix: [f64; 4],
}

fn to_level(x: f64) -> u8 {
    (x * 10.0).round().clamp(0.0, 10.0) as u8
}

/// Delta expressed in grid units, cleaned of representation error.
pub(crate) fn grid_units(d: f64, step: f64) -> f64 {
    ((d / step) * 1e6).round() / 1e6
}

pub(crate) fn snap(x: f64, lo: u8, hi: u8) -> u8 {
    x.round().clamp(lo as f64, hi as f64) as u8
}

fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

impl World {
    pub fn new(config: SimConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let personas = PersonaName::ALL.map(|name| {
            let spec = &config.personas[&name];
            let mut delta = [[0.0; 2]; AgentAction::COUNT];
            for a in AgentAction::ALL {
                delta[a.index()] = spec.delta[&a];
            }
            let mut pending_delta = delta;
            for (a, d) in &spec.pending_delta {
                pending_delta[a.index()] = *d;
            }
            let mut uninformed_delta = delta;
            for (a, d) in &spec.uninformed_delta {
                uninformed_delta[a.index()] = *d;
            }
            let mut response_table = [[[0.0; UserResponse::COUNT]; AgentAction::COUNT]; Bucket::COUNT];
            for b in Bucket::ALL {
                let rows = &spec.responses[&b];
                for a in AgentAction::ALL {
                    response_table[b as usize][a.index()] = *rows.overrides.get(&a).unwrap_or(&rows.default);
                }
            }
            Persona {
                name,
                baseline_rapport: to_level(spec.rapport),
                baseline_level: to_level(spec.level),
                delta,
                pending_delta,
                uninformed_delta,
                response_table,
            }
        });
        let mix = config.mix_weights();
        Ok(Self { config, personas, mix })
    }

    pub fn domain(&self) -> Domain {
        self.config.domain
    }

    pub fn turn_limit(&self) -> usize {
        self.config.turn_limit
    }

    pub fn persona(&self, name: PersonaName) -> &Persona {
        &self.personas[name.index()]
    }

    pub fn initial_hidden(&self, persona: PersonaName, initial_intensity: Option<u8>) -> Hidden {
        let p = self.persona(persona);
        let level = match self.domain() {
            Domain::Persuasion => p.baseline_level,
            Domain::Counseling => initial_intensity.unwrap_or(3).clamp(1, 5),
        };
        Hidden { rapport: p.baseline_rapport, level, pending: false, inquired: false }
    }

    /// Delta selected by persona, action and the pre-move hidden state.
    pub fn delta(&self, persona: PersonaName, hidden: &Hidden, action: AgentAction) -> [f64; 2] {
        let p = self.persona(persona);
        if hidden.pending {
            p.pending_delta[action.index()]
        } else if self.domain() == Domain::Counseling && !hidden.inquired {
            p.uninformed_delta[action.index()]
        } else {
            p.delta[action.index()]
        }
    }

    pub fn bucket(&self, hidden: &Hidden) -> Bucket {
        let warm = hidden.rapport >= 5;
        let open = match self.domain() {
            Domain::Persuasion => hidden.level >= 5,
            Domain::Counseling => hidden.level <= 2,
        };
        Bucket::classify(warm, open, hidden.pending)
    }

    pub fn response_row(&self, persona: PersonaName, bucket: Bucket, action: AgentAction) -> &[f64; UserResponse::COUNT] {
        &self.persona(persona).response_table[bucket as usize][action.index()]
    }

    /// Exact distribution of a grid level after adding `d` plus noise.
    pub fn grid_outcomes(&self, level: u8, d: f64) -> Vec<(u8, f64)> {
        if d == 0.0 {
            return vec![(level, 1.0)];
        }
        let step = self.config.grid_step;
        let mu = level as f64 + grid_units(d, step);
        let s = self.config.noise_sigma / step;
        if s == 0.0 {
            return vec![(snap(mu, 0, GRID_LEVELS), 1.0)];
        }
        let mut out = Vec::new();
        for k in 0..=GRID_LEVELS {
            let lo = if k == 0 { f64::NEG_INFINITY } else { (k as f64 - 0.5 - mu) / s };
            let hi = if k == GRID_LEVELS { f64::INFINITY } else { (k as f64 + 0.5 - mu) / s };
            let p = std_normal_cdf(hi) - std_normal_cdf(lo);
            if p > 0.0 {
                out.push((k, p));
            }
        }
        out
    }

    /// Exact distribution of the willingness/intensity level after a move.
    pub fn level_outcomes(&self, level: u8, d: f64) -> Vec<(u8, f64)> {
        match self.domain() {
            Domain::Persuasion => self.grid_outcomes(level, d),
            Domain::Counseling => {
                let p = d.abs();
                let target = if d > 0.0 { (level + 1).min(5) } else { level.saturating_sub(1).max(1) };
                if p == 0.0 || target == level {
                    vec![(level, 1.0)]
                } else {
                    vec![(level, 1.0 - p), (target, p)]
                }
            }
        }
    }

    /// Hidden state after the move, before the user's response is drawn.
    pub(crate) fn post_move_flags(hidden: &Hidden, action: AgentAction) -> (bool, bool) {
        let pending = hidden.pending && action != AgentAction::AddressConcern;
        let inquired = hidden.inquired || action == AgentAction::Inquire;
        (pending, inquired)
    }

    /// Every (probability, next hidden state, user response) of one step.
    pub fn outcomes(&self, persona: PersonaName, hidden: &Hidden, action: AgentAction) -> Vec<Outcome> {
        let [dr, dl] = self.delta(persona, hidden, action);
        let (pending, inquired) = Self::post_move_flags(hidden, action);
        let mut out = Vec::new();
        for (rapport, pr) in self.grid_outcomes(hidden.rapport, dr) {
            for (level, pl) in self.level_outcomes(hidden.level, dl) {
                let moved = Hidden { rapport, level, pending, inquired };
                let row = self.response_row(persona, self.bucket(&moved), action);
                for response in UserResponse::ALL {
                    let p = pr * pl * row[response.index()];
                    if p > 0.0 {
                        let next = Hidden { pending: pending || response.is_objection(), ..moved };
                        out.push(Outcome { prob: p, next, response });
                    }
                }
            }
        }
        out
    }

    /// Terminal reward of a finished episode.
    pub fn terminal_reward(&self, hidden: &Hidden, initial_intensity: Option<u8>) -> f64 {
        match self.domain() {
            Domain::Persuasion => quantize_donation(hidden.level as f64 / 10.0),
            Domain::Counseling => initial_intensity.unwrap_or(hidden.level) as f64 - hidden.level as f64,
        }
    }
}

/// Donation on the 0.5 grid, capped at 2.0 for willingness 1.
pub fn quantize_donation(willingness: f64) -> f64 {
    (willingness.clamp(0.0, 1.0) * 4.0).round() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_index_round_trip() {
        for i in 0..Hidden::SPACE {
            assert_eq!(Hidden::from_index(i).index(), i);
        }
    }

    #[test]
    fn outcome_distributions_sum_to_one() {
        for cfg in [SimConfig::persuasion(), SimConfig::counseling()] {
            let world = World::new(cfg).unwrap();
            for p in PersonaName::ALL {
                for h in [world.initial_hidden(p, Some(4)), Hidden { rapport: 10, level: 1, pending: true, inquired: true }] {
                    for a in AgentAction::ALL {
                        let total: f64 = world.outcomes(p, &h, a).iter().map(|o| o.prob).sum();
                        assert!((total - 1.0).abs() < 1e-12, "{p} {a} {total}");
                    }
                }
            }
        }
    }

    #[test]
    fn grid_noise_preserves_the_mean_off_the_boundary() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        for d in [0.05, 0.1, 0.2, -0.15] {
            let mean: f64 = world.grid_outcomes(5, d).iter().map(|(k, p)| *k as f64 * p).sum();
            assert!((mean - (5.0 + d * 10.0)).abs() < 1e-9, "{d}: {mean}");
        }
    }

    #[test]
    fn donation_quantization() {
        assert_eq!(quantize_donation(0.0), 0.0);
        assert_eq!(quantize_donation(1.0), 2.0);
        assert_eq!(quantize_donation(0.5), 1.0);
        let mut prev = 0.0;
        for k in 0..=100 {
            let q = quantize_donation(k as f64 / 100.0);
            assert!(q >= prev);
            prev = q;
        }
    }
}
