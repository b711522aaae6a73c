use crate::error::{Error, Result};
use crate::math::Tensor;

/// Temperature softmax over `f64` scores, max-subtracted.
///
/// Callers guarantee a non-empty input and `tau > 0`.
pub fn softmax_temp_f64(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| ((s - max) / tau).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Temperature softmax: `exp((s_i - max s) / tau) / sum_j exp((s_j - max s) / tau)`.
pub fn softmax_temp(scores: &Tensor, tau: f32) -> Result<Tensor> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("softmax over zero scores"));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Parameter(format!("temperature must be positive, got {tau}")));
    }
    let wide: Vec<f64> = scores.data().iter().map(|&s| f64::from(s)).collect();
    let out = softmax_temp_f64(&wide, f64::from(tau))
        .into_iter()
        .map(|v| v as f32)
        .collect();
    Ok(Tensor::vector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f32], b: &[f32], tol: f32) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn uniform_scores_give_uniform_weights() {
        let g = softmax_temp(&Tensor::vector(vec![0.0; 3]), 0.25).unwrap();
        assert!(close(g.data(), &[1.0 / 3.0; 3], 1e-7));
    }

    #[test]
    fn unit_temperature_two_scores() {
        // e / (e + 1)
        let g = softmax_temp(&Tensor::vector(vec![1.0, 0.0]), 1.0).unwrap();
        assert!(close(g.data(), &[0.73106, 0.26894], 1e-4));
    }

    #[test]
    fn sharpened_two_scores() {
        // e^4 / (e^4 + 1)
        let g = softmax_temp(&Tensor::vector(vec![1.0, 0.0]), 0.25).unwrap();
        assert!(close(g.data(), &[0.98201, 0.01799], 1e-4));
    }

    #[test]
    fn rejects_empty_and_bad_tau() {
        assert!(matches!(
            softmax_temp(&Tensor::vector(Vec::new()), 1.0),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            softmax_temp(&Tensor::vector(vec![1.0]), 0.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            softmax_temp(&Tensor::vector(vec![1.0]), -2.0),
            Err(Error::Parameter(_))
        ));
    }

    proptest! {
        #[test]
        fn normalized_and_bounded(
            scores in prop::collection::vec(-50.0f32..50.0, 1..20),
            log_tau in -3.0f32..3.0,
        ) {
            let tau = 10f32.powf(log_tau);
            let g = softmax_temp(&Tensor::vector(scores), tau).unwrap();
            let sum: f64 = g.data().iter().map(|&v| f64::from(v)).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-6);
            prop_assert!(g.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        // Scores on a 1/1024 grid with integer shifts keep `s + c` exact, so the
        // max-subtracted logits are identical bit for bit.
        #[test]
        fn shift_invariant_bitwise(
            raw in prop::collection::vec(-4096i32..4096, 1..12),
            shift in -1000i32..1000,
            tau in 0.01f32..10.0,
        ) {
            let base: Vec<f32> = raw.iter().map(|&r| r as f32 / 1024.0).collect();
            let shifted: Vec<f32> = base.iter().map(|&s| s + shift as f32).collect();
            let a = softmax_temp(&Tensor::vector(base), tau).unwrap();
            let b = softmax_temp(&Tensor::vector(shifted), tau).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn argmax_independent_of_tau(
            scores in prop::collection::vec(-5.0f32..5.0, 2..10),
            t1 in 0.01f32..5.0,
            t2 in 0.01f32..5.0,
        ) {
            let best = scores.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            prop_assume!(scores.iter().filter(|&&s| s == best).count() == 1);
            let (hi, lo) = if t1 > t2 { (t1, t2) } else { (t2, t1) };
            let arg = scores.iter().position(|&s| s == best).unwrap();
            let g_hi = softmax_temp(&Tensor::vector(scores.clone()), hi).unwrap();
            let g_lo = softmax_temp(&Tensor::vector(scores), lo).unwrap();
            for g in [&g_hi, &g_lo] {
                let m = g.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                prop_assert_eq!(g.data()[arg], m);
            }
            // Lower temperature never flattens the winner.
            prop_assert!(g_lo.data()[arg] + 1e-6 >= g_hi.data()[arg]);
        }
    }
}
