//! Fixed-length encoding of flat token states.

use crate::dialogue::Domain;
use crate::vocab::{AgentAction, TokenId, UserResponse, MICRO_EOS};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    /// Number of non-EOS tokens; agent actions are ids `0..num_actions`.
    pub num_tokens: usize,
    pub num_actions: usize,
    pub eos: TokenId,
    pub window: usize,
    pub turn_limit: usize,
    pub domain: Domain,
    /// User tokens that raise an objection.
    pub objection_tokens: Vec<TokenId>,
    /// Agent tokens that resolve a pending objection.
    pub resolve_tokens: Vec<TokenId>,
}

impl FeatureEncoder {
    pub fn micro(domain: Domain) -> Self {
        Self {
            num_tokens: AgentAction::COUNT + UserResponse::COUNT,
            num_actions: AgentAction::COUNT,
            eos: MICRO_EOS,
            window: 3,
            turn_limit: domain.turn_limit(),
            domain,
            objection_tokens: vec![UserResponse::ObjectionWaste.token(), UserResponse::ObjectionTime.token()],
            resolve_tokens: vec![AgentAction::AddressConcern.token()],
        }
    }

    /// Window one-hots (with a pad slot each), per-token counts, turn
    /// fraction, visible objection flag and domain flag.
    pub fn dim(&self) -> usize {
        self.window * (self.num_tokens + 1) + self.num_tokens + 3
    }

    pub fn encode_into(&self, tokens: &[TokenId], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        out.fill(0.0);
        let slot = self.num_tokens + 1;
        let mut recent = tokens.iter().rev().filter(|t| **t != self.eos && t.index() < self.num_tokens);
        for k in 0..self.window {
            let idx = recent.next().map_or(self.num_tokens, |t| t.index());
            out[k * slot + idx] = 1.0;
        }
        let counts = self.window * slot;
        let limit = self.turn_limit.max(1) as f64;
        let mut turns = 0usize;
        let mut pending = false;
        for t in tokens {
            if *t == self.eos {
                turns += 1;
            } else if t.index() < self.num_tokens {
                out[counts + t.index()] += 1.0 / limit;
                if self.objection_tokens.contains(t) {
                    pending = true;
                } else if self.resolve_tokens.contains(t) {
                    pending = false;
                }
            }
        }
        let tail = counts + self.num_tokens;
        out[tail] = turns as f64 / limit;
        out[tail + 1] = pending as u8 as f64;
        out[tail + 2] = (self.domain == Domain::Counseling) as u8 as f64;
    }

    pub fn encode(&self, tokens: &[TokenId]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.encode_into(tokens, &mut out);
        out
    }

    pub fn action_index(&self, token: TokenId) -> Option<usize> {
        (token.index() < self.num_actions).then_some(token.index())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_length_and_pure() {
        let enc = FeatureEncoder::micro(Domain::Persuasion);
        assert_eq!(enc.dim(), 70);
        let s = [AgentAction::Greet.token(), MICRO_EOS, UserResponse::ObjectionTime.token()];
        assert_eq!(enc.encode(&s), enc.encode(&s));
        assert_eq!(enc.encode(&[]).len(), 70);
    }

    #[test]
    fn pending_flag_follows_objections() {
        let enc = FeatureEncoder::micro(Domain::Persuasion);
        let flag = enc.dim() - 2;
        let mut s = vec![AgentAction::Greet.token(), MICRO_EOS, UserResponse::ObjectionWaste.token()];
        assert_eq!(enc.encode(&s)[flag], 1.0);
        s.extend([AgentAction::AddressConcern.token(), MICRO_EOS, UserResponse::Positive.token()]);
        assert_eq!(enc.encode(&s)[flag], 0.0);
        assert_eq!(enc.encode(&s)[flag - 1], 0.2);
    }

    #[test]
    fn window_pads_short_histories() {
        let enc = FeatureEncoder::micro(Domain::Counseling);
        let x = enc.encode(&[AgentAction::Inquire.token()]);
        assert_eq!(x[AgentAction::Inquire.index()], 1.0);
        assert_eq!(x[17 + 16], 1.0);
        assert_eq!(x[34 + 16], 1.0);
        assert_eq!(*x.last().unwrap(), 1.0);
    }
}
