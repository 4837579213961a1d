//! Agents that can be evaluated against the simulator.

use super::EvalError;
use crate::dialogue::Dialogue;
use crate::microworld::behavior::{script_probs, Script, Visible};
use crate::microworld::oracle::argmax;
use crate::microworld::{OracleSolution, SimulatorState};
use crate::rl::Checkpoint;
use crate::vocab::{AgentAction, MICRO_EOS};

pub trait Policy: Sync {
    fn id(&self) -> String;

    /// Distribution over [`AgentAction::ALL`] given the dialogue so far.
    /// `state` is the simulator's hidden state; only oracle agents read it.
    fn probs(&self, dialogue: &Dialogue, state: &SimulatorState) -> Result<Vec<f64>, EvalError>;
}

impl Policy for Checkpoint {
    fn id(&self) -> String {
        self.method.name().to_string()
    }

    fn probs(&self, dialogue: &Dialogue, _state: &SimulatorState) -> Result<Vec<f64>, EvalError> {
        let tokens = dialogue.flatten(MICRO_EOS).unwrap_or_default();
        Ok(self.policy(&tokens)?)
    }
}

/// A checkpoint under a different name, e.g. one arm of a sweep.
pub struct Named<'a, P: Policy + ?Sized>(pub String, pub &'a P);

impl<P: Policy + ?Sized> Policy for Named<'_, P> {
    fn id(&self) -> String {
        self.0.clone()
    }

    fn probs(&self, dialogue: &Dialogue, state: &SimulatorState) -> Result<Vec<f64>, EvalError> {
        self.1.probs(dialogue, state)
    }
}

/// Greedy optimal play with full access to the hidden state.
pub struct OraclePolicy<'a>(pub &'a OracleSolution);

impl Policy for OraclePolicy<'_> {
    fn id(&self) -> String {
        "oracle".into()
    }

    fn probs(&self, _dialogue: &Dialogue, s: &SimulatorState) -> Result<Vec<f64>, EvalError> {
        let q = self.0.q(s.persona, s.initial_intensity, &s.hidden, s.turn)?;
        let mut p = vec![0.0; AgentAction::COUNT];
        p[argmax(q)] = 1.0;
        Ok(p)
    }
}

/// One behavior script with ε-noise.
pub struct ScriptPolicy {
    pub script: Script,
    pub epsilon: f64,
}

impl Policy for ScriptPolicy {
    fn id(&self) -> String {
        self.script.id().to_string()
    }

    fn probs(&self, dialogue: &Dialogue, _state: &SimulatorState) -> Result<Vec<f64>, EvalError> {
        Ok(script_probs(self.script, &Visible::from_dialogue(dialogue), dialogue.domain, self.epsilon).to_vec())
    }
}

pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn id(&self) -> String {
        "uniform".into()
    }

    fn probs(&self, _dialogue: &Dialogue, _state: &SimulatorState) -> Result<Vec<f64>, EvalError> {
        Ok(vec![1.0 / AgentAction::COUNT as f64; AgentAction::COUNT])
    }
}
