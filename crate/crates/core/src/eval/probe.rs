//! Objection probe: how much an agent answers a fresh objection with
//! `address_concern` rather than pressing on with an ask.

use super::{EvalError, Policy};
use crate::dialogue::{Dialogue, Turn};
use crate::microworld::oracle::argmax;
use crate::microworld::sim::{derive_seed, rng_from};
use crate::microworld::{BehaviorPolicy, SimulatorState, Visible, World};
use crate::vocab::AgentAction;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeState {
    pub dialogue: Dialogue,
    pub state: SimulatorState,
}

/// Collects up to `n` states whose last user turn is an objection, taken
/// from behavior-policy episodes (at most one per episode).
pub fn probe_states(world: &World, n: usize, seed: u64) -> Vec<ProbeState> {
    let behavior = BehaviorPolicy::default();
    let mut out = Vec::with_capacity(n);
    for ep in 0..(50 * n as u64) {
        if out.len() == n {
            break;
        }
        let mut rng = rng_from(derive_seed(seed, ep));
        let script = behavior.start_episode(&mut rng);
        let mut state = world.reset(&mut rng);
        let mut d = Dialogue::new(format!("probe-{ep}"), world.domain(), crate::dialogue::Source::Orig);
        d.meta.persona = Some(state.persona.name().to_string());
        d.meta.initial_intensity = state.initial_intensity;
        while !state.done {
            let a = behavior.act(script, &Visible::from_dialogue(&d), world.domain(), &mut rng);
            let (r, next) = world.step(&state, a, &mut rng).expect("loop guards on done");
            d.turns.push(Turn::agent(vec![a.token()]));
            d.turns.push(Turn::user(vec![r.token()]));
            state = next;
            if r.is_objection() && !state.done {
                out.push(ProbeState { dialogue: d, state });
                break;
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub agent: String,
    pub probes: usize,
    /// Mean probability of `address_concern`.
    pub address_concern_mass: f64,
    /// Mean probability of `ask_small` plus `ask_large`.
    pub ask_mass: f64,
    /// Share of probes where `address_concern` is the most likely action.
    pub address_concern_argmax: f64,
}

pub fn behavior_probe(policy: &dyn Policy, probes: &[ProbeState]) -> Result<ProbeReport, EvalError> {
    let (mut ac, mut ask, mut top) = (0.0, 0.0, 0usize);
    for p in probes {
        let probs = policy.probs(&p.dialogue, &p.state)?;
        super::check_probs(&policy.id(), &probs)?;
        ac += probs[AgentAction::AddressConcern.index()];
        ask += probs[AgentAction::AskSmall.index()] + probs[AgentAction::AskLarge.index()];
        if argmax(&probs) == AgentAction::AddressConcern.index() {
            top += 1;
        }
    }
    let n = probes.len().max(1) as f64;
    Ok(ProbeReport {
        agent: policy.id(),
        probes: probes.len(),
        address_concern_mass: ac / n,
        ask_mass: ask / n,
        address_concern_argmax: top as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{OraclePolicy, ScriptPolicy};
    use crate::microworld::{OracleSolution, Script, SimConfig};

    #[test]
    fn probes_end_on_fresh_objections() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        let probes = probe_states(&world, 50, 1);
        assert_eq!(probes.len(), 50);
        for p in &probes {
            assert!(Visible::from_dialogue(&p.dialogue).last_response().unwrap().is_objection());
            assert!(p.state.objection_pending());
        }
        assert_eq!(probe_states(&world, 50, 1), probes);
    }

    #[test]
    fn emotional_script_never_addresses() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        let probes = probe_states(&world, 40, 2);
        let r = behavior_probe(&ScriptPolicy { script: Script::EmotionalOnly, epsilon: 0.0 }, &probes).unwrap();
        assert_eq!(r.address_concern_mass, 0.0);
        let oracle = OracleSolution::solve(&world, 1.0).unwrap();
        let o = behavior_probe(&OraclePolicy(&oracle), &probes).unwrap();
        assert!(o.address_concern_mass > r.address_concern_mass);
    }
}
