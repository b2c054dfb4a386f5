//! Temperature-scaled softmax and the high-temperature approximation of
//! the soft-target cross-entropy gradient.

use super::DistillError;
use crate::teacher::loss::softmax;

/// Largest |mean| accepted as zero by [`matching_logits_gradient`].
pub const ZERO_MEAN_TOLERANCE: f64 = 1e-9;

fn check_temperature(t: f64) -> Result<(), DistillError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(DistillError::InvalidTemperature(t))
    }
}

/// `q_i = exp(z_i / T) / Σ_j exp(z_j / T)`.
pub fn temperature_softmax(z: &[f64], t: f64) -> Result<Vec<f64>, DistillError> {
    check_temperature(t)?;
    let scaled: Vec<f64> = z.iter().map(|v| v / t).collect();
    Ok(softmax(&scaled))
}

/// Exact gradient with respect to `z` of the cross-entropy between the
/// soft targets `softmax(v/T)` and `softmax(z/T)`: `(q - p) / T`.
pub fn soft_target_gradient(z: &[f64], v: &[f64], t: f64) -> Result<Vec<f64>, DistillError> {
    if z.len() != v.len() {
        return Err(DistillError::LengthMismatch(z.len(), v.len()));
    }
    let q = temperature_softmax(z, t)?;
    let p = temperature_softmax(v, t)?;
    Ok(q.iter().zip(&p).map(|(qi, pi)| (qi - pi) / t).collect())
}

/// `(z_i - v_i) / (N T²)` with `N` the number of logits: the limit of
/// [`soft_target_gradient`] for large `T` when both vectors have zero mean.
pub fn matching_logits_gradient(z: &[f64], v: &[f64], t: f64) -> Result<Vec<f64>, DistillError> {
    if z.len() != v.len() {
        return Err(DistillError::LengthMismatch(z.len(), v.len()));
    }
    check_temperature(t)?;
    let n = z.len() as f64;
    for (which, x) in [("student", z), ("teacher", v)] {
        let mean = x.iter().sum::<f64>() / n;
        if mean.is_nan() || mean.abs() > ZERO_MEAN_TOLERANCE {
            return Err(DistillError::NotZeroMean { which, mean });
        }
    }
    Ok(z.iter().zip(v).map(|(zi, vi)| (zi - vi) / (n * t * t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::teacher::loss::cross_entropy;
    use proptest::prelude::*;

    fn zero_mean(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
        let mut x: Vec<f64> = (0..n).map(|_| (rng.next_f64() * 2.0 - 1.0) * scale).collect();
        let m = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= m);
        x
    }

    #[test]
    fn unit_temperature_is_plain_softmax() {
        let z = [0.3, -1.2, 2.0];
        assert_eq!(temperature_softmax(&z, 1.0).unwrap(), softmax(&z));
    }

    #[test]
    fn high_temperature_is_nearly_uniform() {
        let q = temperature_softmax(&[30.0, -12.0, 4.0, 0.0], 1e6).unwrap();
        assert!(q.iter().all(|&p| (p - 0.25).abs() < 1e-4));
    }

    #[test]
    fn halving_logits() {
        assert_eq!(temperature_softmax(&[2.0, 0.0], 2.0).unwrap(), softmax(&[1.0, 0.0]));
    }

    #[test]
    fn bad_inputs() {
        for t in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                temperature_softmax(&[1.0], t),
                Err(DistillError::InvalidTemperature(_))
            ));
        }
        assert!(matches!(
            matching_logits_gradient(&[1.0, 0.0], &[0.0, 0.0], 10.0),
            Err(DistillError::NotZeroMean { which: "student", .. })
        ));
        assert!(matching_logits_gradient(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn matched_logits_and_temperature_scaling() {
        let z = [1.0, -0.5, -0.5];
        assert_eq!(matching_logits_gradient(&z, &z, 3.0).unwrap(), vec![0.0; 3]);
        let v = [-1.0, 0.25, 0.75];
        let g1 = matching_logits_gradient(&z, &v, 5.0).unwrap();
        let g2 = matching_logits_gradient(&z, &v, 10.0).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((b - a / 4.0).abs() < 1e-18);
        }
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(1);
        let h = 1e-5;
        for t in [1.0, 5.0, 100.0] {
            let z = zero_mean(&mut rng, 10, 3.0);
            let v = zero_mean(&mut rng, 10, 3.0);
            let p = temperature_softmax(&v, t).unwrap();
            let loss = |z: &[f64]| cross_entropy(&p, &temperature_softmax(z, t).unwrap());
            let g = soft_target_gradient(&z, &v, t).unwrap();
            for i in 0..10 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (loss(&zp) - loss(&zm)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs() + 1e-10, "t={t} i={i}");
            }
        }
    }

    #[test]
    fn approximation_error_shrinks_like_one_over_t() {
        // the gap to the exact gradient is O(1/T³) while the gradient is
        // O(1/T²), so the relative error falls roughly tenfold per decade
        let mut rng = SeededRng::new(2);
        let z = zero_mean(&mut rng, 10, 1.0);
        let v = zero_mean(&mut rng, 10, 1.0);
        let rel = |t: f64| {
            let a = matching_logits_gradient(&z, &v, t).unwrap();
            let e = soft_target_gradient(&z, &v, t).unwrap();
            let num: f64 = a.iter().zip(&e).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let den: f64 = e.iter().map(|y| y * y).sum::<f64>().sqrt();
            num / den
        };
        let (r10, r100, r1000) = (rel(10.0), rel(100.0), rel(1000.0));
        assert!(r100 < r10 / 5.0 && r1000 < r100 / 5.0, "{r10} {r100} {r1000}");
        assert!(r1000 < 1e-3);
    }

    proptest! {
        #[test]
        fn temperature_softmax_is_a_distribution(
            z in prop::collection::vec(-100.0f64..100.0, 1..12),
            t in 0.01f64..1e4,
        ) {
            let q = temperature_softmax(&z, t).unwrap();
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_readout_keeps_the_argmax(k in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let q = softmax(&k);
            prop_assert_eq!(crate::teacher::loss::argmax(&q), crate::teacher::loss::argmax(&k));
        }
    }
}
