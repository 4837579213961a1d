//! Encoded transition sets and minibatches.

use super::features::FeatureEncoder;
use super::RlError;
use crate::dialogue::Transition;
use rand::Rng;

/// Transitions with pre-encoded states, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset {
    pub dim: usize,
    pub num_actions: usize,
    pub s: Vec<f64>,
    pub s2: Vec<f64>,
    pub a: Vec<usize>,
    pub r: Vec<f64>,
    pub done: Vec<bool>,
}

impl EncodedDataset {
    pub fn new(dim: usize, num_actions: usize) -> Self {
        Self { dim, num_actions, s: Vec::new(), s2: Vec::new(), a: Vec::new(), r: Vec::new(), done: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn push(&mut self, s: &[f64], a: usize, r: f64, s2: &[f64], done: bool) {
        debug_assert!(s.len() == self.dim && s2.len() == self.dim && a < self.num_actions);
        self.s.extend_from_slice(s);
        self.s2.extend_from_slice(s2);
        self.a.push(a);
        self.r.push(r);
        self.done.push(done);
    }

    pub fn from_transitions(transitions: &[Transition], enc: &FeatureEncoder) -> Result<Self, RlError> {
        let mut d = Self::new(enc.dim(), enc.num_actions);
        let mut s = vec![0.0; enc.dim()];
        let mut s2 = vec![0.0; enc.dim()];
        for t in transitions {
            let a = enc.action_index(t.action).ok_or(RlError::NotAnAction(t.action.index()))?;
            if !t.reward.is_finite() {
                return Err(RlError::NonFiniteReward);
            }
            enc.encode_into(&t.state, &mut s);
            enc.encode_into(&t.next_state, &mut s2);
            d.push(&s, a, t.reward, &s2, t.terminal);
        }
        Ok(d)
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.s[i * self.dim..(i + 1) * self.dim]
    }

    pub fn batch_buffer(&self, n: usize) -> OwnedBatch {
        OwnedBatch::new(n, self.dim)
    }

    /// Fills `buf` with indices drawn uniformly with replacement.
    pub fn sample_into<R: Rng + ?Sized>(&self, buf: &mut OwnedBatch, rng: &mut R) {
        let d = self.dim;
        for i in 0..buf.len() {
            let j = rng.random_range(0..self.len());
            buf.s[i * d..(i + 1) * d].copy_from_slice(&self.s[j * d..(j + 1) * d]);
            buf.s2[i * d..(i + 1) * d].copy_from_slice(&self.s2[j * d..(j + 1) * d]);
            buf.a[i] = self.a[j];
            buf.r[i] = self.r[j];
            buf.done[i] = self.done[j];
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OwnedBatch {
    pub s: Vec<f64>,
    pub s2: Vec<f64>,
    pub a: Vec<usize>,
    pub r: Vec<f64>,
    pub done: Vec<bool>,
}

impl OwnedBatch {
    pub fn new(n: usize, dim: usize) -> Self {
        Self { s: vec![0.0; n * dim], s2: vec![0.0; n * dim], a: vec![0; n], r: vec![0.0; n], done: vec![false; n] }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn view(&self) -> Batch<'_> {
        Batch { s: &self.s, s2: &self.s2, a: &self.a, r: &self.r, done: &self.done }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub s: &'a [f64],
    pub s2: &'a [f64],
    pub a: &'a [usize],
    pub r: &'a [f64],
    pub done: &'a [bool],
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}
