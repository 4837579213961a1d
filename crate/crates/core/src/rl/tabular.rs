//! Tabular reference implementations of the expectile value target and the
//! ILQL fixed point, used to validate the function-approximation trainer.

use crate::microworld::oracle::{FiniteMdp, TabularMdp};
use crate::microworld::OracleError;
use rand::Rng;

/// Weighted τ-expectile of `values`: the root of
/// `Σ w·|τ − 1[x < v]|·(x − v) = 0`, solved exactly segment by segment.
pub fn expectile(values: &[f64], weights: &[f64], tau: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).filter(|(_, w)| *w > 0.0).collect();
    assert!(!pts.is_empty(), "expectile of an empty distribution");
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // With the k smallest points below v: v = Σ c·w·x / Σ c·w where c is
    // 1 − τ below and τ at or above.
    for k in 0..=pts.len() {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, (x, w)) in pts.iter().enumerate() {
            let c = if i < k { 1.0 - tau } else { tau };
            num += c * w * x;
            den += c * w;
        }
        let v = num / den;
        let lo_ok = k == 0 || pts[k - 1].0 < v || (pts[k - 1].0 - v).abs() <= 1e-12 * v.abs().max(1.0);
        let hi_ok = k == pts.len() || v <= pts[k].0 + 1e-12 * v.abs().max(1.0);
        if lo_ok && hi_ok {
            return v;
        }
    }
    unreachable!("expectile root always lies in some segment")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValueTarget {
    /// Expectile over dataset actions.
    Expectile(f64),
    /// Literal maximum over all actions.
    Max,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularIlql {
    pub num_actions: usize,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl TabularIlql {
    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Argmax of `π_β·exp(α·A)` as α → ∞: the best covered action.
    pub fn greedy(&self, s: usize, coverage: &[f64]) -> usize {
        let row = self.q_row(s);
        let mut best: Option<usize> = None;
        for a in 0..self.num_actions {
            if coverage[s * self.num_actions + a] > 0.0 && best.is_none_or(|b| row[a] > row[b]) {
                best = Some(a);
            }
        }
        best.unwrap_or(0)
    }
}

/// Iterates `Q(s,a) = E[r + γ V(s′)]`, `V(s) = target over Q(s,·)` to a
/// fixed point. `coverage[s * A + a]` is the dataset action distribution.
pub fn tabular_ilql(
    mdp: &TabularMdp,
    coverage: &[f64],
    gamma: f64,
    target: ValueTarget,
    tol: f64,
    max_iters: usize,
) -> Result<TabularIlql, OracleError> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut q = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    let mut buf = Vec::new();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        residual = 0.0f64;
        for s in 0..ns {
            for a in 0..na {
                buf.clear();
                mdp.branches(s, a, &mut buf);
                q[s * na + a] = buf.iter().map(|b| b.prob * (b.reward + b.next.map_or(0.0, |n| gamma * v[n]))).sum();
            }
            let row = &q[s * na..(s + 1) * na];
            let new = match target {
                ValueTarget::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ValueTarget::Expectile(tau) => expectile(row, &coverage[s * na..(s + 1) * na], tau),
            };
            residual = residual.max((new - v[s]).abs());
            v[s] = new;
        }
        if residual < tol {
            return Ok(TabularIlql { num_actions: na, q, v });
        }
    }
    Err(OracleError::NotConverged { iters: max_iters, residual })
}

/// Random MDP with rewards in [0, 1] and a per-step termination chance.
pub fn random_mdp<R: Rng + ?Sized>(states: usize, actions: usize, rng: &mut R) -> TabularMdp {
    let mut m = TabularMdp::new(states, actions);
    for s in 0..states {
        for a in 0..actions {
            let r = rng.random_range(0.0..1.0);
            let stop = rng.random_range(0.05..0.5);
            let n1 = rng.random_range(0..states);
            let n2 = rng.random_range(0..states);
            let split = rng.random_range(0.0..1.0);
            m.add(s, a, stop, r, None);
            m.add(s, a, (1.0 - stop) * split, r, Some(n1));
            m.add(s, a, (1.0 - stop) * (1.0 - split), r, Some(n2));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microworld::oracle::value_iteration;
    use crate::microworld::sim::rng_from;

    #[test]
    fn expectile_basics() {
        assert_eq!(expectile(&[0.0, 1.0], &[1.0, 1.0], 0.5), 0.5);
        assert_eq!(expectile(&[0.7], &[1.0], 0.9), 0.7);
        assert!((expectile(&[0.0, 1.0], &[1.0, 1.0], 0.95) - 0.95).abs() < 1e-12);
        // Zero-weight actions are ignored.
        assert!((expectile(&[3.0, 100.0], &[1.0, 0.0], 0.99) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn expectile_matches_bisection() {
        let mut rng = rng_from(1);
        for _ in 0..500 {
            let n = rng.random_range(1..8);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let ws: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let tau = rng.random_range(0.01..0.99);
            let f = |v: f64| -> f64 {
                xs.iter().zip(&ws).map(|(x, w)| w * if *x < v { 1.0 - tau } else { tau } * (x - v)).sum()
            };
            let (mut lo, mut hi) = (-3.0, 3.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            assert!((expectile(&xs, &ws, tau) - 0.5 * (lo + hi)).abs() < 1e-9);
        }
    }

    #[test]
    fn high_tau_value_is_close_to_the_max() {
        let mut rng = rng_from(2);
        for _ in 0..100 {
            let m = random_mdp(10, 2, &mut rng);
            let sol = tabular_ilql(&m, &[1.0; 20], 0.9, ValueTarget::Expectile(0.95), 1e-12, 10_000).unwrap();
            for s in 0..10 {
                let max = sol.q_row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!((max - sol.v[s]).abs() <= 0.05 * max.abs(), "{} vs {max}", sol.v[s]);
            }
        }
    }

    #[test]
    fn pessimism_is_monotone_in_tau() {
        let mut rng = rng_from(3);
        for _ in 0..100 {
            let m = random_mdp(10, 3, &mut rng);
            let cov: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
            let lo = tabular_ilql(&m, &cov, 0.9, ValueTarget::Expectile(0.6), 1e-12, 10_000).unwrap();
            let hi = tabular_ilql(&m, &cov, 0.9, ValueTarget::Expectile(0.9), 1e-12, 10_000).unwrap();
            for s in 0..10 {
                assert!(lo.v[s] <= hi.v[s] + 1e-12);
            }
        }
    }

    #[test]
    fn near_one_tau_recovers_the_optimal_policy() {
        let mut rng = rng_from(4);
        for _ in 0..50 {
            let m = random_mdp(10, 3, &mut rng);
            let vi = value_iteration(&m, 0.9, 1e-12, 10_000).unwrap();
            let cov = vec![1.0; 30];
            let sol = tabular_ilql(&m, &cov, 0.9, ValueTarget::Expectile(1.0 - 1e-9), 1e-12, 100_000).unwrap();
            let max = tabular_ilql(&m, &cov, 0.9, ValueTarget::Max, 1e-12, 10_000).unwrap();
            for s in 0..10 {
                let row = vi.q_row(s);
                let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                // Skip exact ties, where any maximizer is optimal.
                if row.iter().filter(|q| best - **q < 1e-6).count() == 1 {
                    assert_eq!(sol.greedy(s, &cov), vi.greedy(s));
                }
                assert!((max.v[s] - vi.v[s]).abs() < 1e-9);
            }
        }
    }
}
