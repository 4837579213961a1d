//! Central finite-difference gradient checks.

use super::loss::{expectile_loss, softmax_cross_entropy};
use super::mlp::Mlp;
use super::params::ParamSet;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Relative error with an absolute floor so that near-zero gradients are
/// compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic` against central differences of `f` at every parameter.
pub fn check_params<F: FnMut(&ParamSet) -> f64>(params: &ParamSet, analytic: &ParamSet, h: f64, mut f: F) -> f64 {
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for i in 0..p.num_params() {
        let x = p.get_flat(i);
        p.set_flat(i, x + h);
        let up = f(&p);
        p.set_flat(i, x - h);
        let down = f(&p);
        p.set_flat(i, x);
        worst = worst.max(relative_error(analytic.get_flat(i), (up - down) / (2.0 * h)));
    }
    worst
}

/// Checks a scalar function's derivative.
pub fn check_scalar<F: Fn(f64) -> f64>(x: f64, analytic: f64, h: f64, f: F) -> f64 {
    relative_error(analytic, (f(x + h) - f(x - h)) / (2.0 * h))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub max_relative_error: f64,
    pub worst: String,
}

impl GradCheckReport {
    pub fn record(&mut self, name: &str, err: f64) {
        self.instances += 1;
        if err > self.max_relative_error || self.worst.is_empty() {
            self.max_relative_error = self.max_relative_error.max(err);
            self.worst = name.to_string();
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.instances += other.instances;
        if other.max_relative_error > self.max_relative_error {
            self.max_relative_error = other.max_relative_error;
            self.worst = other.worst;
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative_error < tol
    }
}

/// Random networks under a random quadratic readout loss.
pub fn check_mlp_instances<R: Rng + ?Sized>(n: usize, rng: &mut R) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for k in 0..n {
        let hidden: Vec<usize> = (0..rng.random_range(0..3)).map(|_| rng.random_range(1..8)).collect();
        let m = Mlp::new(rng.random_range(1..6), &hidden, rng.random_range(1..4));
        let p = m.init(rng);
        let batch = rng.random_range(1..4);
        let x: Vec<f64> = (0..batch * m.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..batch * m.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |p: &ParamSet| -> f64 {
            let y = m.predict_batch(p, &x, batch).expect("shapes fixed");
            y.iter().zip(&w).map(|(y, w)| 0.5 * w * y * y + w * y).sum()
        };
        let cache = m.forward_batch(&p, &x, batch).expect("shapes fixed");
        let gout: Vec<f64> = cache.output().iter().zip(&w).map(|(y, w)| w * y + w).collect();
        let g = m.backward(&p, &cache, &gout).expect("fresh cache");
        report.record(&format!("mlp #{k} {:?}", m.sizes), check_params(&p, &g, DEFAULT_STEP, loss));
    }
    report
}

pub fn check_expectile_instances<R: Rng + ?Sized>(n: usize, rng: &mut R) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for k in 0..n {
        let tau = rng.random_range(0.01..0.99);
        let t: f64 = rng.random_range(-3.0..3.0);
        // Keep away from the kink at u = 0.
        let mut p: f64 = rng.random_range(-3.0..3.0);
        if (t - p).abs() < 1e-3 {
            p += 0.01;
        }
        let (_, g) = expectile_loss(p, t, tau).expect("tau in range");
        let err = check_scalar(p, g, DEFAULT_STEP, |x| expectile_loss(x, t, tau).expect("tau in range").0);
        report.record(&format!("expectile #{k}"), err);
    }
    report
}

pub fn check_cross_entropy_instances<R: Rng + ?Sized>(n: usize, rng: &mut R) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for k in 0..n {
        let dim = rng.random_range(2..12);
        let logits: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
        let label = rng.random_range(0..dim);
        let (_, g) = softmax_cross_entropy(&logits, label);
        let mut worst = 0.0f64;
        for i in 0..dim {
            let err = check_scalar(logits[i], g[i], DEFAULT_STEP, |x| {
                let mut l = logits.clone();
                l[i] = x;
                softmax_cross_entropy(&l, label).0
            });
            worst = worst.max(err);
        }
        report.record(&format!("cross-entropy #{k}"), worst);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microworld::sim::rng_from;

    #[test]
    fn network_gradients() {
        let r = check_mlp_instances(100, &mut rng_from(1));
        assert_eq!(r.instances, 100);
        assert!(r.passes(DEFAULT_TOLERANCE), "{r:?}");
    }

    #[test]
    fn scalar_losses() {
        let mut rng = rng_from(2);
        assert!(check_expectile_instances(200, &mut rng).passes(DEFAULT_TOLERANCE));
        assert!(check_cross_entropy_instances(100, &mut rng).passes(DEFAULT_TOLERANCE));
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let err = check_scalar(1.0, 3.0, DEFAULT_STEP, |x| x * x);
        assert!(err > 0.1);
    }
}
