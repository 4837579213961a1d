//! Implicit Q-learning: Q/V heads, their losses, the training loop and
//! advantage-weighted policy extraction.

use super::dataset::{Batch, EncodedDataset, OwnedBatch};
use super::RlError;
use crate::microworld::sim::rng_from;
use crate::numerics::gradcheck::{check_params, GradCheckReport, DEFAULT_STEP};
use crate::numerics::loss::expectile_unchecked;
use crate::numerics::{adamw_step, polyak_update, AdamWConfig, Mlp, NumericsError, OptState, ParamSet};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub tau: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub polyak_alpha: f64,
    pub updates_per_iteration: usize,
    pub iterations: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Coefficient of the conservative (CQL) penalty on Q.
    pub cql_alpha: f64,
    /// Inverse temperature of policy extraction.
    pub extraction_alpha: f64,
    pub hidden: Vec<usize>,
    /// Behavior-cloning schedule.
    pub bc_lr: f64,
    pub bc_iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            gamma: 0.99,
            batch_size: 128,
            polyak_alpha: 0.005,
            updates_per_iteration: 60,
            iterations: 100,
            lr: 1e-4,
            weight_decay: 0.01,
            cql_alpha: 0.0,
            extraction_alpha: 30.0,
            hidden: vec![64, 64],
            bc_lr: 1e-3,
            bc_iterations: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let positive = [self.batch_size, self.updates_per_iteration, self.iterations].iter().all(|x| *x > 0)
            && self.lr > 0.0
            && self.bc_lr > 0.0
            && self.polyak_alpha > 0.0
            && self.polyak_alpha <= 1.0;
        if !positive {
            return Err(RlError::Config("schedule values and rates must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(RlError::Config(format!("gamma must lie in (0, 1] (got {})", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(RlError::Config(format!("tau must lie in (0, 1) (got {})", self.tau)));
        }
        if self.cql_alpha < 0.0 || self.extraction_alpha < 0.0 || self.weight_decay < 0.0 {
            return Err(RlError::Config("penalty coefficients must be non-negative".into()));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig { lr: self.lr, weight_decay: self.weight_decay, ..Default::default() }
    }
}

/// Q, V and target-Q networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QvHeads {
    pub q_net: Mlp,
    pub v_net: Mlp,
    pub q: ParamSet,
    pub v: ParamSet,
    pub q_target: ParamSet,
}

impl QvHeads {
    pub fn init<R: Rng + ?Sized>(input: usize, actions: usize, hidden: &[usize], rng: &mut R) -> Self {
        let q_net = Mlp::new(input, hidden, actions);
        let v_net = Mlp::new(input, hidden, 1);
        let q = q_net.init(rng);
        let v = v_net.init(rng);
        Self { q_target: q.clone(), q_net, v_net, q, v }
    }

    pub fn num_actions(&self) -> usize {
        self.q_net.output_dim()
    }

    pub fn q_values(&self, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        self.q_net.predict_batch(&self.q, x, 1)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, NumericsError> {
        Ok(self.v_net.predict_batch(&self.v, x, 1)?[0])
    }
}

/// Mean squared TD error toward `r + γ(1 − done)·V(s′)` plus an optional
/// conservative penalty; gradients with respect to the Q parameters.
pub fn q_loss(batch: &Batch, heads: &QvHeads, gamma: f64, cql_alpha: f64) -> Result<(f64, ParamSet), RlError> {
    let n = batch.len();
    let na = heads.num_actions();
    let v_next = heads.v_net.predict_batch(&heads.v, batch.s2, n)?;
    let cache = heads.q_net.forward_batch(&heads.q, batch.s, n)?;
    let qs = cache.output();
    let mut loss = 0.0;
    let mut gout = vec![0.0; n * na];
    for i in 0..n {
        let bootstrap = if batch.done[i] { 0.0 } else { gamma * v_next[i] };
        let y = batch.r[i] + bootstrap;
        if !y.is_finite() {
            return Err(RlError::Numerics(NumericsError::NonFinite("Q targets")));
        }
        let row = &qs[i * na..(i + 1) * na];
        let a = batch.a[i];
        let err = row[a] - y;
        loss += err * err;
        gout[i * na + a] += 2.0 * err / n as f64;
        if cql_alpha > 0.0 {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|q| (q - max).exp()).sum();
            loss += cql_alpha * (max + z.ln() - row[a]);
            for (k, q) in row.iter().enumerate() {
                gout[i * na + k] += cql_alpha * (q - max).exp() / z / n as f64;
            }
            gout[i * na + a] -= cql_alpha / n as f64;
        }
    }
    let grads = heads.q_net.backward(&heads.q, &cache, &gout)?;
    Ok((loss / n as f64, grads))
}

/// Expectile regression of V(s) toward the target network's Q(s, a_data).
pub fn v_loss(batch: &Batch, heads: &QvHeads, tau: f64) -> Result<(f64, ParamSet), RlError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(RlError::Numerics(NumericsError::Tau(tau)));
    }
    let n = batch.len();
    let na = heads.num_actions();
    let q_t = heads.q_net.predict_batch(&heads.q_target, batch.s, n)?;
    let cache = heads.v_net.forward_batch(&heads.v, batch.s, n)?;
    let vs = cache.output();
    let mut loss = 0.0;
    let mut gout = vec![0.0; n];
    for i in 0..n {
        let target = q_t[i * na + batch.a[i]];
        let (l, g) = expectile_unchecked(vs[i], target, tau);
        loss += l;
        gout[i] = g / n as f64;
    }
    if !loss.is_finite() {
        return Err(RlError::Numerics(NumericsError::NonFinite("V loss")));
    }
    let grads = heads.v_net.backward(&heads.v, &cache, &gout)?;
    Ok((loss / n as f64, grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub q_loss: f64,
    pub v_loss: f64,
}

/// Alternating Q/V updates with Polyak target tracking.
pub fn train_qv(data: &EncodedDataset, cfg: &TrainConfig) -> Result<(QvHeads, Vec<LossRecord>), RlError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(RlError::EmptyDataset);
    }
    let mut rng = rng_from(cfg.seed);
    let mut heads = QvHeads::init(data.dim, data.num_actions, &cfg.hidden, &mut rng);
    let mut q_opt = OptState::new(&heads.q, cfg.adamw());
    let mut v_opt = OptState::new(&heads.v, cfg.adamw());
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut buf = data.batch_buffer(cfg.batch_size);
    for iteration in 0..cfg.iterations {
        let (mut ql, mut vl) = (0.0, 0.0);
        for _ in 0..cfg.updates_per_iteration {
            data.sample_into(&mut buf, &mut rng);
            let batch = buf.view();
            let (lq, gq) = q_loss(&batch, &heads, cfg.gamma, cfg.cql_alpha)?;
            let (lv, gv) = v_loss(&batch, &heads, cfg.tau)?;
            if !(lq.is_finite() && lv.is_finite()) {
                return Err(RlError::Diverged { iteration });
            }
            adamw_step(&mut heads.q, &gq, &mut q_opt)?;
            adamw_step(&mut heads.v, &gv, &mut v_opt)?;
            polyak_update(&mut heads.q_target, &heads.q, cfg.polyak_alpha)?;
            ql += lq;
            vl += lv;
        }
        let k = cfg.updates_per_iteration as f64;
        history.push(LossRecord { iteration, q_loss: ql / k, v_loss: vl / k });
    }
    Ok((heads, history))
}

/// `π(a|s) ∝ π_β(a|s)·exp(α(Q(s,a) − V(s)))`, stabilized by subtracting
/// the largest exponent among supported actions.
pub fn extract_policy(pi_beta: &[f64], q: &[f64], v: f64, alpha: f64) -> Vec<f64> {
    if alpha == 0.0 {
        return pi_beta.to_vec();
    }
    let exps: Vec<f64> = q.iter().map(|q| alpha * (q - v)).collect();
    let max = exps
        .iter()
        .zip(pi_beta)
        .filter(|(_, p)| **p > 0.0)
        .map(|(e, _)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return pi_beta.to_vec();
    }
    let w: Vec<f64> = exps.iter().zip(pi_beta).map(|(e, p)| if *p > 0.0 { p * (e - max).exp() } else { 0.0 }).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn random_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize, na: usize) -> OwnedBatch {
    let mut b = OwnedBatch::new(n, dim);
    for i in 0..n {
        for k in 0..dim {
            b.s[i * dim + k] = rng.random_range(-1.0..1.0);
            b.s2[i * dim + k] = rng.random_range(-1.0..1.0);
        }
        b.a[i] = rng.random_range(0..na);
        b.r[i] = rng.random_range(-1.0..2.0);
        b.done[i] = rng.random_bool(0.3);
    }
    b
}

/// Finite-difference checks of the Q and V loss gradients on random heads
/// and batches; odd instances include the conservative penalty.
pub fn check_loss_instances<R: Rng + ?Sized>(n: usize, rng: &mut R) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for k in 0..n {
        let (dim, na) = (rng.random_range(2..6), rng.random_range(2..5));
        let mut heads = QvHeads::init(dim, na, &[5], rng);
        heads.q_target = Mlp::new(dim, &[5], na).init(rng);
        let owned = random_batch(rng, 4, dim, na);
        let b = owned.view();
        let cql = if k % 2 == 0 { 0.0 } else { 0.7 };
        let (_, gq) = q_loss(&b, &heads, 0.9, cql).expect("shapes fixed");
        let err = check_params(&heads.q, &gq, DEFAULT_STEP, |p| {
            let h = QvHeads { q: p.clone(), ..heads.clone() };
            q_loss(&b, &h, 0.9, cql).expect("shapes fixed").0
        });
        report.record(&format!("q-loss #{k}"), err);
        let (_, gv) = v_loss(&b, &heads, 0.8).expect("shapes fixed");
        let err = check_params(&heads.v, &gv, DEFAULT_STEP, |p| {
            let h = QvHeads { v: p.clone(), ..heads.clone() };
            v_loss(&b, &h, 0.8).expect("shapes fixed").0
        });
        report.record(&format!("v-loss #{k}"), err);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::DEFAULT_TOLERANCE;
    use proptest::{prop_assert, proptest};

    #[test]
    fn loss_gradients_pass_finite_differences() {
        let report = check_loss_instances(100, &mut rng_from(5));
        assert_eq!(report.instances, 200);
        assert!(report.passes(DEFAULT_TOLERANCE), "{report:?}");
    }

    #[test]
    fn terminal_target_is_the_reward() {
        let mut rng = rng_from(6);
        let mut heads = QvHeads::init(2, 2, &[], &mut rng);
        // Q(s, ·) = bias = 2 for every action.
        heads.q = heads.q_net.zeros();
        heads.q.tensor_mut(1).fill(2.0);
        let mut b = super::super::dataset::OwnedBatch::new(1, 2);
        b.r[0] = 2.0;
        b.done[0] = true;
        let (l, g) = q_loss(&b.view(), &heads, 0.99, 0.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
        // γ = 0 ignores V(s′) even for non-terminal transitions.
        b.done[0] = false;
        assert_eq!(q_loss(&b.view(), &heads, 0.0, 0.0).unwrap().0, 0.0);
    }

    #[test]
    fn extraction_examples() {
        let p = extract_policy(&[0.5, 0.5], &[2f64.ln(), 0.0], 0.0, 1.0);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let beta = [0.1, 0.2, 0.7];
        assert_eq!(extract_policy(&beta, &[5.0, -3.0, 1.0], 0.4, 0.0), beta.to_vec());
        let p = extract_policy(&[0.0, 1.0], &[100.0, 0.0], 0.0, 10.0);
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn extraction_shift_invariance_on_random_instances() {
        let mut rng = rng_from(8);
        for _ in 0..1000 {
            let n = rng.random_range(2..12);
            let mut beta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let z: f64 = beta.iter().sum();
            beta.iter_mut().for_each(|b| *b /= z);
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v = rng.random_range(-5.0..5.0);
            let alpha = rng.random_range(0.0..10.0);
            let c = rng.random_range(-100.0..100.0);
            let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
            let a = extract_policy(&beta, &q, v, alpha);
            let b = extract_policy(&beta, &shifted, v + c, alpha);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn extraction_is_a_distribution(q in proptest::collection::vec(-50.0f64..50.0, 3), alpha in 0.0f64..20.0) {
            let p = extract_policy(&[0.2, 0.3, 0.5], &q, 0.0, alpha);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
        }
    }
}
