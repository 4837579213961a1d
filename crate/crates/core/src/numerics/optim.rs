use super::params::{NumericsError, ParamSet};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Adam moments for one parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptState {
    pub fn new(params: &ParamSet, config: AdamWConfig) -> Self {
        let n = params.num_params();
        Self { config, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One Adam step with decoupled weight decay.
pub fn adamw_step(params: &mut ParamSet, grads: &ParamSet, state: &mut OptState) -> Result<(), NumericsError> {
    params.check_same_shape(grads)?;
    if state.m.len() != params.num_params() {
        return Err(NumericsError::Shape("optimizer state does not match parameters".into()));
    }
    if !grads.all_finite() {
        return Err(NumericsError::NonFinite("gradients"));
    }
    let c = state.config;
    state.step += 1;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    let decay = 1.0 - c.lr * c.weight_decay;
    for (((p, g), m), v) in params.iter_mut().zip(grads.iter()).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
        let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
        *p = *p * decay - c.lr * update;
    }
    Ok(())
}

/// `target ← (1 − α)·target + α·online`.
pub fn polyak_update(target: &mut ParamSet, online: &ParamSet, alpha: f64) -> Result<(), NumericsError> {
    target.check_same_shape(online)?;
    for (t, o) in target.iter_mut().zip(online.iter()) {
        *t = (1.0 - alpha) * *t + alpha * o;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::Tensor;

    fn scalar(x: f64) -> ParamSet {
        ParamSet::new(vec![Tensor { name: "x".into(), shape: vec![1], data: vec![x] }]).unwrap()
    }

    #[test]
    fn zero_gradient_no_decay_is_a_no_op() {
        let mut p = scalar(1.5);
        let mut s = OptState::new(&p, AdamWConfig { weight_decay: 0.0, ..Default::default() });
        adamw_step(&mut p, &scalar(0.0), &mut s).unwrap();
        assert_eq!(p.tensor(0)[0], 1.5);
    }

    #[test]
    fn moves_against_the_gradient() {
        for g in [0.3, -2.0] {
            let mut p = scalar(0.0);
            let mut s = OptState::new(&p, AdamWConfig::default());
            adamw_step(&mut p, &scalar(g), &mut s).unwrap();
            assert!(p.tensor(0)[0] * g < 0.0);
        }
    }

    #[test]
    fn quadratic_converges() {
        // f(x) = (x - 3)², optimum 3; no decay so the optimum is unshifted.
        let mut p = scalar(0.0);
        let mut s = OptState::new(&p, AdamWConfig { lr: 1e-2, weight_decay: 0.0, ..Default::default() });
        for _ in 0..10_000 {
            let x = p.tensor(0)[0];
            adamw_step(&mut p, &scalar(2.0 * (x - 3.0)), &mut s).unwrap();
        }
        assert!((p.tensor(0)[0] - 3.0).abs() < 1e-6, "{}", p.tensor(0)[0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = scalar(0.0);
        let mut s = OptState::new(&p, AdamWConfig::default());
        let mut g = scalar(0.0);
        g.set_flat(0, f64::INFINITY);
        assert!(adamw_step(&mut p, &g, &mut s).is_err());
    }

    #[test]
    fn polyak_values() {
        let mut t = scalar(0.0);
        polyak_update(&mut t, &scalar(1.0), 0.005).unwrap();
        assert_eq!(t.tensor(0)[0], 0.005);
        polyak_update(&mut t, &scalar(1.0), 1.0).unwrap();
        assert_eq!(t.tensor(0)[0], 1.0);
    }

    #[test]
    fn polyak_geometric_decay() {
        let online = scalar(1.0);
        let mut t = scalar(0.0);
        let alpha = 0.005;
        for n in 1..=500 {
            polyak_update(&mut t, &online, alpha).unwrap();
            let gap = 1.0 - t.tensor(0)[0];
            assert!((gap - (1.0 - alpha).powi(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn polyak_shape_mismatch() {
        let two = ParamSet::new(vec![Tensor { name: "x".into(), shape: vec![2], data: vec![0.0; 2] }]).unwrap();
        assert!(polyak_update(&mut scalar(0.0), &two, 0.5).is_err());
    }
}
