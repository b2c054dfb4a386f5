use super::CartError;
use crate::linalg::Matrix;

fn class_counts(labels: &[usize]) -> Result<Vec<usize>, CartError> {
    if labels.is_empty() {
        return Err(CartError::Empty);
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    Ok(counts)
}

/// `1 - Σ p_c²` from class counts.
pub fn gini_from_counts(counts: &[usize]) -> f64 {
    let m: usize = counts.iter().sum();
    if m == 0 {
        return 0.0;
    }
    let m = m as f64;
    let s: f64 = counts.iter().map(|&c| (c as f64 / m).powi(2)).sum();
    (1.0 - s).max(0.0)
}

/// `-Σ p_c log₂ p_c` from class counts, with `0 log 0 = 0`.
pub fn entropy_from_counts(counts: &[usize]) -> f64 {
    let m: usize = counts.iter().sum();
    if m == 0 {
        return 0.0;
    }
    let m = m as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / m;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

pub fn impurity_gini(labels: &[usize]) -> Result<f64, CartError> {
    Ok(gini_from_counts(&class_counts(labels)?))
}

pub fn impurity_entropy(labels: &[usize]) -> Result<f64, CartError> {
    Ok(entropy_from_counts(&class_counts(labels)?))
}

/// Mean squared distance of the target rows to their componentwise mean,
/// i.e. the per-output variances summed.
pub fn impurity_mse(targets: &Matrix) -> Result<f64, CartError> {
    let m = targets.rows();
    if m == 0 {
        return Err(CartError::Empty);
    }
    let k = targets.cols();
    let mut mean = vec![0.0; k];
    for row in targets.iter_rows() {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in &mut mean {
        *a /= m as f64;
    }
    let ss: f64 = targets
        .iter_rows()
        .map(|row| row.iter().zip(&mean).map(|(v, mu)| (v - mu).powi(2)).sum::<f64>())
        .sum();
    Ok(ss / m as f64)
}

/// `k · log₂ k` for `k = 0..=n`.
pub(crate) fn nlogn_table(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| if k == 0 { 0.0 } else { k as f64 * (k as f64).log2() })
        .collect()
}
