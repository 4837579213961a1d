//! Exact Bayesian filtering over the hidden user state from visible history.

use super::behavior::Visible;
use super::config::PersonaName;
use super::world::{Hidden, World};
use crate::vocab::{AgentAction, UserResponse};
use std::collections::BTreeMap;

/// Sparse distribution over hidden states.
pub type Belief = BTreeMap<Hidden, f64>;

/// Filters one persona's hidden state through `(action, response)` pairs.
/// Returns the normalized belief and the likelihood of the observations.
pub fn filter(
    world: &World,
    persona: PersonaName,
    initial_intensity: Option<u8>,
    steps: &[(AgentAction, UserResponse)],
) -> (Belief, f64) {
    let mut belief: Belief = BTreeMap::from([(world.initial_hidden(persona, initial_intensity), 1.0)]);
    let mut likelihood = 1.0;
    for &(action, response) in steps {
        let mut next = Belief::new();
        for (h, w) in &belief {
            for o in world.outcomes(persona, h, action) {
                if o.response == response {
                    *next.entry(o.next).or_default() += w * o.prob;
                }
            }
        }
        let z: f64 = next.values().sum();
        if z <= 0.0 {
            return (Belief::new(), 0.0);
        }
        next.values_mut().for_each(|p| *p /= z);
        likelihood *= z;
        belief = next;
    }
    (belief, likelihood)
}

pub fn steps_of(v: &Visible) -> Vec<(AgentAction, UserResponse)> {
    v.actions.iter().copied().zip(v.responses.iter().copied()).collect()
}

/// P(persona | steps) from the mix prior; falls back to the prior when no
/// persona explains the observations.
pub fn persona_posterior(world: &World, initial_intensity: Option<u8>, steps: &[(AgentAction, UserResponse)]) -> [f64; 4] {
    let mut post = PersonaName::ALL.map(|p| {
        let prior = world.mix[p.index()];
        if prior == 0.0 {
            0.0
        } else {
            prior * filter(world, p, initial_intensity, steps).1
        }
    });
    let z: f64 = post.iter().sum();
    if z <= 0.0 {
        return world.mix;
    }
    post.iter_mut().for_each(|p| *p /= z);
    post
}

/// Precomputed one-step outcomes for every persona, hidden state and
/// action, for fast dense filtering.
#[derive(Clone, Debug)]
pub struct BeliefKernel {
    /// `[(persona · SPACE + hidden) · A + action]` → (next hidden, response, prob).
    table: Vec<Vec<(u16, u8, f64)>>,
}

impl BeliefKernel {
    pub fn new(world: &World) -> Self {
        let mut table = Vec::with_capacity(4 * Hidden::SPACE * AgentAction::COUNT);
        for p in PersonaName::ALL {
            for h in 0..Hidden::SPACE {
                let hidden = Hidden::from_index(h);
                for a in AgentAction::ALL {
                    table.push(
                        world
                            .outcomes(p, &hidden, a)
                            .into_iter()
                            .map(|o| (o.next.index() as u16, o.response.index() as u8, o.prob))
                            .collect(),
                    );
                }
            }
        }
        Self { table }
    }

    /// Filters `steps` from `start`; returns the dense belief after the first
    /// `keep` steps and the likelihood of all steps.
    pub fn run(
        &self,
        persona: PersonaName,
        start: Hidden,
        steps: &[(AgentAction, UserResponse)],
        keep: usize,
    ) -> (Vec<f64>, f64) {
        let mut belief = vec![0.0; Hidden::SPACE];
        belief[start.index()] = 1.0;
        let mut kept = if keep == 0 { Some(belief.clone()) } else { None };
        let mut likelihood = 1.0;
        let base = persona.index() * Hidden::SPACE;
        for (k, &(action, response)) in steps.iter().enumerate() {
            let mut next = vec![0.0; Hidden::SPACE];
            let r = response.index() as u8;
            for (h, &w) in belief.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for &(n, resp, p) in &self.table[(base + h) * AgentAction::COUNT + action.index()] {
                    if resp == r {
                        next[n as usize] += w * p;
                    }
                }
            }
            let z: f64 = next.iter().sum();
            if z <= 0.0 {
                return (kept.unwrap_or_else(|| vec![0.0; Hidden::SPACE]), 0.0);
            }
            next.iter_mut().for_each(|x| *x /= z);
            likelihood *= z;
            belief = next;
            if k + 1 == keep {
                kept = Some(belief.clone());
            }
        }
        (kept.unwrap_or(belief), likelihood)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microworld::config::SimConfig;

    #[test]
    fn empty_history_is_the_prior() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        assert_eq!(persona_posterior(&world, None, &[]), world.mix);
        let (b, l) = filter(&world, PersonaName::Caring, None, &[]);
        assert_eq!(l, 1.0);
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn objections_point_to_skeptics() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        let steps = [
            (AgentAction::LogicalAppeal, UserResponse::ObjectionWaste),
            (AgentAction::CredibilityInfo, UserResponse::ObjectionTime),
        ];
        let post = persona_posterior(&world, None, &steps);
        assert!(post[PersonaName::Skeptical.index()] > 0.5, "{post:?}");
        let (b, _) = filter(&world, PersonaName::Skeptical, None, &steps);
        assert!((b.values().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(b.keys().all(|h| h.pending));
    }

    #[test]
    fn dense_kernel_matches_sparse_filter() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        let kernel = BeliefKernel::new(&world);
        let steps = [
            (AgentAction::Greet, UserResponse::Neutral),
            (AgentAction::LogicalAppeal, UserResponse::ObjectionWaste),
            (AgentAction::AddressConcern, UserResponse::Positive),
            (AgentAction::AskSmall, UserResponse::Positive),
        ];
        for p in PersonaName::ALL {
            let start = world.initial_hidden(p, None);
            let (_, full) = filter(&world, p, None, &steps);
            for keep in 0..=steps.len() {
                let (dense, lik) = kernel.run(p, start, &steps, keep);
                assert!((lik - full).abs() <= 1e-12 * full.max(1e-300));
                let (sparse, _) = filter(&world, p, None, &steps[..keep]);
                if full > 0.0 {
                    for (h, w) in &sparse {
                        assert!((dense[h.index()] - w).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
