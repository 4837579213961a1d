use super::params::NumericsError;

/// Asymmetric squared loss `|τ − 1[u<0]|·u²` with `u = target − prediction`.
/// Returns the loss and its derivative with respect to the prediction.
pub fn expectile_loss(prediction: f64, target: f64, tau: f64) -> Result<(f64, f64), NumericsError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(NumericsError::Tau(tau));
    }
    Ok(expectile_unchecked(prediction, target, tau))
}

#[inline]
pub(crate) fn expectile_unchecked(prediction: f64, target: f64, tau: f64) -> (f64, f64) {
    let u = target - prediction;
    let w = if u < 0.0 { 1.0 - tau } else { tau };
    (w * u * u, -2.0 * w * u)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Cross-entropy `−log softmax(logits)[label]` and its gradient wrt logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut grad: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    grad[label] -= 1.0;
    (lse - logits[label], grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_values() {
        assert_eq!(expectile_loss(0.0, 2.0, 0.5).unwrap().0, 2.0);
        assert!((expectile_loss(1.0, 0.0, 0.8).unwrap().0 - 0.2).abs() < 1e-15);
        assert!((expectile_loss(0.0, 1.0, 0.8).unwrap().0 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn tau_range() {
        for t in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(expectile_loss(0.0, 1.0, t).is_err());
        }
    }

    proptest! {
        #[test]
        fn half_tau_is_half_squared_error(p in -1e3f64..1e3, t in -1e3f64..1e3) {
            let (l, g) = expectile_loss(p, t, 0.5).unwrap();
            prop_assert!((l - 0.5 * (t - p).powi(2)).abs() <= 1e-12 * (1.0 + l.abs()));
            prop_assert!((g - (p - t)).abs() <= 1e-12 * (1.0 + g.abs()));
        }

        #[test]
        fn asymmetry_ratio(u in 1e-3f64..10.0, tau in 0.05f64..0.95) {
            let (pos, _) = expectile_loss(0.0, u, tau).unwrap();
            let (neg, _) = expectile_loss(0.0, -u, tau).unwrap();
            prop_assert!((pos / neg - tau / (1.0 - tau)).abs() < 1e-9 * (tau / (1.0 - tau)));
        }
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let (l, g) = softmax_cross_entropy(&[1.0, 2.0, 3.0], 2);
        assert!(l > 0.0);
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }
}
