//! Behavior cloning: maximum-likelihood categorical policies over actions.

use super::dataset::EncodedDataset;
use super::ilql::TrainConfig;
use super::RlError;
use crate::microworld::sim::rng_from;
use crate::numerics::loss::softmax;
use crate::numerics::{adamw_step, AdamWConfig, Mlp, OptState, ParamSet};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPolicyNet {
    pub net: Mlp,
    pub params: ParamSet,
}

impl BehaviorPolicyNet {
    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>, RlError> {
        Ok(softmax(&self.net.predict_batch(&self.params, x, 1)?))
    }

    /// Mean log-likelihood of the dataset actions.
    pub fn mean_log_likelihood(&self, data: &EncodedDataset) -> Result<f64, RlError> {
        let logits = self.net.predict_batch(&self.params, &data.s, data.len())?;
        let na = data.num_actions;
        let total: f64 = (0..data.len())
            .map(|i| {
                let row = &logits[i * na..(i + 1) * na];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                row[data.a[i]] - lse
            })
            .sum();
        Ok(total / data.len() as f64)
    }
}

/// Cross-entropy training on (state, action) pairs; returns the policy and
/// the per-iteration mean loss.
pub fn fit_behavior_policy(data: &EncodedDataset, cfg: &TrainConfig) -> Result<(BehaviorPolicyNet, Vec<f64>), RlError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(RlError::EmptyDataset);
    }
    let mut rng = rng_from(cfg.seed ^ 0xB0C0);
    let net = Mlp::new(data.dim, &cfg.hidden, data.num_actions);
    let mut params = net.init(&mut rng);
    let mut opt = OptState::new(&params, AdamWConfig { lr: cfg.bc_lr, weight_decay: cfg.weight_decay, ..Default::default() });
    let (n, na, d) = (cfg.batch_size, data.num_actions, data.dim);
    let mut x = vec![0.0; n * d];
    let mut labels = vec![0usize; n];
    let mut history = Vec::with_capacity(cfg.bc_iterations);
    for _ in 0..cfg.bc_iterations {
        let mut acc = 0.0;
        for _ in 0..cfg.updates_per_iteration {
            for i in 0..n {
                let j = rng.random_range(0..data.len());
                x[i * d..(i + 1) * d].copy_from_slice(data.state(j));
                labels[i] = data.a[j];
            }
            let cache = net.forward_batch(&params, &x, n)?;
            let logits = cache.output();
            let mut gout = vec![0.0; n * na];
            let mut loss = 0.0;
            for i in 0..n {
                let row = &logits[i * na..(i + 1) * na];
                let p = softmax(row);
                loss -= p[labels[i]].max(1e-300).ln();
                for k in 0..na {
                    gout[i * na + k] = (p[k] - (k == labels[i]) as u8 as f64) / n as f64;
                }
            }
            let g = net.backward(&params, &cache, &gout)?;
            adamw_step(&mut params, &g, &mut opt)?;
            acc += loss / n as f64;
        }
        let mean = acc / cfg.updates_per_iteration as f64;
        if !mean.is_finite() {
            return Err(RlError::Diverged { iteration: history.len() });
        }
        history.push(mean);
    }
    Ok((BehaviorPolicyNet { net, params }, history))
}

/// Additively smoothed action counts keyed by the exact encoded state.
#[derive(Clone, Debug, PartialEq)]
pub struct CountPolicy {
    pub num_actions: usize,
    pub smoothing: f64,
    counts: HashMap<Vec<u64>, Vec<f64>>,
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

impl CountPolicy {
    pub fn fit(data: &EncodedDataset, smoothing: f64) -> Self {
        let mut counts: HashMap<Vec<u64>, Vec<f64>> = HashMap::new();
        for i in 0..data.len() {
            counts.entry(key(data.state(i))).or_insert_with(|| vec![0.0; data.num_actions])[data.a[i]] += 1.0;
        }
        Self { num_actions: data.num_actions, smoothing, counts }
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        let uniform = vec![1.0 / self.num_actions as f64; self.num_actions];
        let Some(c) = self.counts.get(&key(x)) else { return uniform };
        let z: f64 = c.iter().sum::<f64>() + self.smoothing * self.num_actions as f64;
        c.iter().map(|n| (n + self.smoothing) / z).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> TrainConfig {
        TrainConfig { hidden: vec![16], bc_iterations: 20, updates_per_iteration: 30, batch_size: 64, ..Default::default() }
    }

    #[test]
    fn deterministic_context_is_learned() {
        let mut d = EncodedDataset::new(2, 3);
        for _ in 0..50 {
            d.push(&[1.0, 0.0], 2, 0.0, &[0.0, 0.0], true);
            d.push(&[0.0, 1.0], 0, 0.0, &[0.0, 0.0], true);
        }
        let (pi, hist) = fit_behavior_policy(&d, &small_cfg()).unwrap();
        assert!(pi.probs(&[1.0, 0.0]).unwrap()[2] > 0.95);
        assert!(pi.probs(&[0.0, 1.0]).unwrap()[0] > 0.95);
        assert!(hist.last().unwrap() < &hist[0]);
        let counts = CountPolicy::fit(&d, 0.0);
        assert_eq!(counts.probs(&[1.0, 0.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn uniform_actions_give_uniform_policy() {
        let mut rng = rng_from(4);
        let mut d = EncodedDataset::new(2, 4);
        for _ in 0..10_000 {
            let s = if rng.random_bool(0.5) { [1.0, 0.0] } else { [0.0, 1.0] };
            d.push(&s, rng.random_range(0..4), 0.0, &[0.0, 0.0], true);
        }
        let (pi, _) = fit_behavior_policy(&d, &small_cfg()).unwrap();
        for s in [[1.0, 0.0], [0.0, 1.0]] {
            for p in pi.probs(&s).unwrap() {
                assert!((p - 0.25).abs() < 0.05, "{p}");
            }
            for p in CountPolicy::fit(&d, 1.0).probs(&s) {
                assert!((p - 0.25).abs() < 0.05, "{p}");
            }
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(fit_behavior_policy(&EncodedDataset::new(2, 2), &small_cfg()), Err(RlError::EmptyDataset)));
    }
}
