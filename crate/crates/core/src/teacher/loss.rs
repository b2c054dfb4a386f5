use crate::linalg::Matrix;

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax. Panics on non-finite input.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    assert!(z.iter().all(|v| v.is_finite()), "softmax input must be finite: {z:?}");
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-Σ p_i log q_i` with `q` floored at [`PROB_FLOOR`].
pub fn cross_entropy(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distribution lengths differ");
    -p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi == 0.0 { 0.0 } else { pi * qi.max(PROB_FLOOR).ln() })
        .sum::<f64>()
}

/// Training targets for a batch.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [usize]),
    /// One distribution per row, `batch × classes` row-major.
    Soft(&'a [f64]),
}

impl Targets<'_> {
    fn row(&self, i: usize, n: usize, buf: &mut Vec<f64>) {
        buf.clear();
        match *self {
            Targets::Labels(l) => {
                buf.resize(n, 0.0);
                buf[l[i]] = 1.0;
            }
            Targets::Soft(p) => buf.extend_from_slice(&p[i * n..(i + 1) * n]),
        }
    }
}

/// Mean cross-entropy of softmax(logits) against `targets`, and its
/// gradient with respect to the logits.
///
/// For target `p` and prediction `q` the per-row gradient is
/// `q · Σp - p`, which reduces to `q - p` for a distribution.
pub fn softmax_cross_entropy(logits: &Matrix, targets: Targets<'_>) -> (f64, Matrix) {
    let (b, n) = (logits.rows(), logits.cols());
    let mut grad = Matrix::zeros(b, n);
    let mut total = 0.0;
    let mut p = Vec::with_capacity(n);
    for i in 0..b {
        let q = softmax(logits.row(i));
        targets.row(i, n, &mut p);
        total += cross_entropy(&p, &q);
        let mass: f64 = p.iter().sum();
        for ((g, &qi), &pi) in grad.row_mut(i).iter_mut().zip(&q).zip(&p) {
            *g = (qi * mass - pi) / b as f64;
        }
    }
    (total / b.max(1) as f64, grad)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let q = softmax(&[1000.0, 0.0]);
        assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-12);
        assert!(q[1] >= 0.0 && q[1] < 1e-300);
        let q = softmax(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(q[0], 0.09003057317038046, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 0.24472847105479764, epsilon = 1e-15);
        assert_abs_diff_eq!(q[2], 0.6652409557748219, epsilon = 1e-15);
    }

    #[test]
    #[should_panic]
    fn softmax_rejects_nan() {
        softmax(&[0.0, f64::NAN]);
    }

    #[test]
    fn cross_entropy_examples() {
        assert_abs_diff_eq!(
            cross_entropy(&[1.0, 0.0], &[0.5, 0.5]),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(cross_entropy(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        // floored probability keeps the loss finite
        assert_abs_diff_eq!(
            cross_entropy(&[1.0, 0.0], &[0.0, 1.0]),
            -(PROB_FLOOR.ln()),
            epsilon = 1e-9
        );
    }

    #[test]
    fn hard_label_gradient_is_q_minus_onehot() {
        let z = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]);
        let (loss, g) = softmax_cross_entropy(&z, Targets::Labels(&[2]));
        let q = softmax(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(loss, -q[2].ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(0, 0), q[0], epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(0, 2), q[2] - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_soft_targets_give_zero_gradient() {
        let z = Matrix::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.0]]);
        let (loss, g) = softmax_cross_entropy(&z, Targets::Soft(&[0.0; 4]));
        assert_eq!(loss, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let q = softmax(&z);
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(q.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn softmax_is_shift_invariant(
            z in prop::collection::vec(-20.0f64..20.0, 1..10),
            c in -100.0f64..100.0,
        ) {
            let a = softmax(&z);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
