//! Simulator-backed hindsight controller.
//!
//! Reads the whole dialogue, including the user's later responses, to infer
//! which persona it was talking to, then ranks every alternative move at the
//! chosen turn by its optimal expected return under that posterior.

use super::{check_agent_turn, HindsightController, HindsightProposal, RegenError};
use crate::dialogue::Dialogue;
use crate::microworld::behavior::Visible;
use crate::microworld::belief::{steps_of, BeliefKernel};
use crate::microworld::{Hidden, OracleSolution, PersonaName, World};
use crate::vocab::{AgentAction, MICRO_EOS};

pub struct OracleController {
    pub world: World,
    pub oracle: OracleSolution,
    kernel: BeliefKernel,
}

impl OracleController {
    pub fn new(world: World, gamma: f64) -> Result<Self, RegenError> {
        let oracle = OracleSolution::solve(&world, gamma)?;
        let kernel = BeliefKernel::new(&world);
        Ok(Self { world, oracle, kernel })
    }

    /// Expected optimal return of each action at `turn`, averaged over the
    /// full-dialogue persona posterior and the filtered hidden state.
    pub fn action_values(&self, dialogue: &Dialogue, turn: usize) -> Result<[f64; AgentAction::COUNT], RegenError> {
        check_agent_turn(dialogue, turn)?;
        let init = dialogue.meta.initial_intensity;
        let all = steps_of(&Visible::from_dialogue(dialogue));
        let before = Visible::from_dialogue(&Dialogue { turns: dialogue.turns[..turn].to_vec(), ..dialogue.clone() });
        let step = before.turn();
        // Persona weights use the whole dialogue; the hidden state is
        // filtered only up to the relabel point.
        let runs: Vec<(Vec<f64>, f64)> = PersonaName::ALL
            .iter()
            .map(|&p| self.kernel.run(p, self.world.initial_hidden(p, init), &all, step))
            .collect();
        let mut posterior: Vec<f64> = PersonaName::ALL.iter().map(|p| self.world.mix[p.index()] * runs[p.index()].1).collect();
        if posterior.iter().sum::<f64>() <= 0.0 {
            posterior = self.world.mix.to_vec();
        }
        let mut values = [0.0; AgentAction::COUNT];
        let mut mass = 0.0;
        for p in PersonaName::ALL {
            let w = posterior[p.index()];
            let belief = &runs[p.index()].0;
            if w == 0.0 || belief.iter().all(|b| *b == 0.0) {
                continue;
            }
            mass += w;
            for (h, &b) in belief.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                let q = self.oracle.q(p, init, &Hidden::from_index(h), step)?;
                for (v, qa) in values.iter_mut().zip(q) {
                    *v += w * b * qa;
                }
            }
        }
        if mass > 0.0 {
            values.iter_mut().for_each(|v| *v /= mass);
        }
        Ok(values)
    }
}

impl HindsightController for OracleController {
    fn propose(&self, dialogue: &Dialogue, turn: usize, n: usize, _seed: u64) -> Result<Vec<HindsightProposal>, RegenError> {
        let values = self.action_values(dialogue, turn)?;
        let original = dialogue.turns[turn].tokens.clone();
        let original_action = match original.as_slice() {
            [t] => AgentAction::from_token(*t),
            _ => None,
        };
        let mut ranked: Vec<AgentAction> = AgentAction::ALL.to_vec();
        // Stable sort keeps the lower action index first on ties.
        ranked.sort_by(|a, b| values[b.index()].total_cmp(&values[a.index()]));
        let prefix = dialogue.prefix(turn, MICRO_EOS)?;
        let base = original_action.map(|a| values[a.index()]);
        Ok(ranked
            .into_iter()
            .filter(|a| Some(*a) != original_action)
            .take(n)
            .map(|a| HindsightProposal {
                prefix: prefix.clone(),
                original_utterance: original.clone(),
                alternative: vec![a.token()],
                alternative_text: String::new(),
                critique: match base {
                    Some(b) => format!("{} scores {:.3} against {:.3} for the original", a.name(), values[a.index()], b),
                    None => format!("{} scores {:.3}", a.name(), values[a.index()]),
                },
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{Domain, Source, Turn};
    use crate::microworld::SimConfig;
    use crate::vocab::UserResponse;

    fn controller() -> OracleController {
        OracleController::new(World::new(SimConfig::persuasion()).unwrap(), 1.0).unwrap()
    }

    fn dialogue(steps: &[(AgentAction, UserResponse)]) -> Dialogue {
        let mut d = Dialogue::new("p0", Domain::Persuasion, Source::Orig);
        for (a, r) in steps {
            d.turns.push(Turn::agent(vec![a.token()]));
            d.turns.push(Turn::user(vec![r.token()]));
        }
        d
    }

    #[test]
    fn proposals_exclude_the_original_and_are_ranked() {
        let c = controller();
        let d = dialogue(&[
            (AgentAction::Greet, UserResponse::Neutral),
            (AgentAction::LogicalAppeal, UserResponse::Neutral),
            (AgentAction::AskSmall, UserResponse::Positive),
        ]);
        for turn in [0, 2, 4] {
            let values = c.action_values(&d, turn).unwrap();
            let props = c.propose(&d, turn, 3, 0).unwrap();
            assert_eq!(props.len(), 3);
            let mut last = f64::INFINITY;
            for p in &props {
                assert_ne!(p.alternative, d.turns[turn].tokens);
                assert_eq!(p.prefix.end_turn, turn);
                let v = values[AgentAction::from_token(p.alternative[0]).unwrap().index()];
                assert!(v <= last);
                last = v;
            }
        }
    }

    #[test]
    fn optimal_original_is_excluded() {
        let c = controller();
        let d = dialogue(&[(AgentAction::Greet, UserResponse::Neutral), (AgentAction::Inquire, UserResponse::Neutral)]);
        let values = c.action_values(&d, 2).unwrap();
        let best = AgentAction::ALL[crate::microworld::oracle::argmax(&values)];
        let mut e = d.clone();
        e.turns[2] = Turn::agent(vec![best.token()]);
        let props = c.propose(&e, 2, 3, 0).unwrap();
        assert!(props.iter().all(|p| p.alternative != vec![best.token()]));
        assert!(props.iter().all(|p| values[AgentAction::from_token(p.alternative[0]).unwrap().index()] <= values[best.index()]));
    }

    #[test]
    fn user_turns_are_rejected() {
        let c = controller();
        let d = dialogue(&[(AgentAction::Greet, UserResponse::Neutral)]);
        assert!(matches!(c.propose(&d, 1, 3, 0), Err(RegenError::NotAgentTurn { .. })));
        assert!(matches!(c.propose(&d, 5, 3, 0), Err(RegenError::PrefixNotInDialogue { .. })));
    }
}
