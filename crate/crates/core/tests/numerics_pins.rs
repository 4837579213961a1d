use hindsight::microworld::sim::rng_from;
use hindsight::numerics::expectile_loss;
use hindsight::rl::tabular::{random_mdp, tabular_ilql, ValueTarget};
use hindsight::rl::{check_loss_instances, extract_policy, train_qv, EncodedDataset, QvHeads, TrainConfig};
use rand::Rng;

/// Deterministic chain s0 → s1 → s2 → end with reward 1 on the last step.
fn chain_dataset() -> EncodedDataset {
    let one_hot = |i: usize| {
        let mut v = vec![0.0; 3];
        v[i] = 1.0;
        v
    };
    let mut d = EncodedDataset::new(3, 2);
    for a in 0..2 {
        d.push(&one_hot(0), a, 0.0, &one_hot(1), false);
        d.push(&one_hot(1), a, 0.0, &one_hot(2), false);
        d.push(&one_hot(2), a, 1.0, &one_hot(0), true);
    }
    d
}

fn chain_heads() -> QvHeads {
    let cfg = TrainConfig { lr: 1e-3, batch_size: 32, iterations: 100, updates_per_iteration: 60, ..Default::default() };
    train_qv(&chain_dataset(), &cfg).unwrap().0
}

#[test]
fn three_step_chain_discounts_twice() {
    let heads = chain_heads();
    let gamma: f64 = 0.99;
    let targets = [gamma * gamma, gamma, 1.0];
    for (s, want) in targets.iter().enumerate() {
        let mut x = vec![0.0; 3];
        x[s] = 1.0;
        for q in heads.q_values(&x).unwrap() {
            assert!((q - want).abs() < 1e-2, "state {s}: Q {q} vs {want}");
        }
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let report = check_loss_instances(100, &mut rng_from(11));
    assert!(report.instances >= 100);
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn half_tau_expectile_is_half_squared_error() {
    let mut rng = rng_from(12);
    for _ in 0..1000 {
        let (p, t) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let (l, g) = expectile_loss(p, t, 0.5).unwrap();
        let half = 0.5 * (t - p) * (t - p);
        assert!((l - half).abs() <= 1e-12 * half.max(1.0));
        assert!((g - (p - t)).abs() <= 1e-12 * (p - t).abs().max(1.0));
    }
}

#[test]
fn high_tau_tabular_value_tracks_the_max() {
    let mut rng = rng_from(13);
    for _ in 0..100 {
        let m = random_mdp(10, 2, &mut rng);
        let sol = tabular_ilql(&m, &[1.0; 20], 0.9, ValueTarget::Expectile(0.95), 1e-12, 10_000).unwrap();
        for s in 0..10 {
            let max = sol.q_row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((max - sol.v[s]).abs() <= 0.05 * max.abs());
        }
    }
}

#[test]
fn extraction_is_behavior_at_zero_and_shift_invariant() {
    let mut rng = rng_from(14);
    for _ in 0..1000 {
        let n = rng.random_range(2..8);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let beta: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v = rng.random_range(-3.0..3.0);
        assert_eq!(extract_policy(&beta, &q, v, 0.0), beta);
        let c = rng.random_range(-50.0..50.0);
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        let a = extract_policy(&beta, &q, v, 5.0);
        let b = extract_policy(&beta, &shifted, v + c, 5.0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
