//! Split search over one node.
//!
//! Each feature is scanned in ascending value order while samples move
//! from the right child to the left one, so every candidate threshold is
//! evaluated from running statistics in O(1) (classification) or O(k)
//! (k regression outputs). The same kernel serves [`best_split`] and the
//! presorted tree builder.

use super::impurity::nlogn_table;
use super::{CartError, FitParams, Impurity, SplitCandidate, Targets};
use crate::linalg::Matrix;
use crate::par;

/// Sufficient statistics of the samples in a node.
#[derive(Debug, Clone)]
pub(crate) enum NodeStats {
    Classes { counts: Vec<usize> },
    Outputs { sum: Vec<f64>, sq_norm: f64 },
}

impl NodeStats {
    pub(crate) fn of(y: &Targets<'_>, samples: &[u32]) -> NodeStats {
        match *y {
            Targets::Classes { labels, n_classes } => {
                let mut counts = vec![0usize; n_classes];
                for &i in samples {
                    counts[labels[i as usize]] += 1;
                }
                NodeStats::Classes { counts }
            }
            Targets::Outputs(z) => {
                let mut sum = vec![0.0; z.cols()];
                let mut sq_norm = 0.0;
                for &i in samples {
                    let row = z.row(i as usize);
                    for (s, v) in sum.iter_mut().zip(row) {
                        *s += v;
                    }
                    sq_norm += row.iter().map(|v| v * v).sum::<f64>();
                }
                NodeStats::Outputs { sum, sq_norm }
            }
        }
    }

    /// Class proportions or componentwise target mean.
    pub(crate) fn value(&self, m: usize) -> Vec<f64> {
        match self {
            NodeStats::Classes { counts } => counts.iter().map(|&c| c as f64 / m as f64).collect(),
            NodeStats::Outputs { sum, .. } => sum.iter().map(|s| s / m as f64).collect(),
        }
    }
}

/// True when every sample has the same label / identical target row.
pub(crate) fn is_pure(y: &Targets<'_>, samples: &[u32], stats: &NodeStats) -> bool {
    match (y, stats) {
        (_, NodeStats::Classes { counts }) => counts.iter().filter(|&&c| c > 0).count() <= 1,
        (Targets::Outputs(z), _) => {
            let first = z.row(samples[0] as usize);
            samples[1..].iter().all(|&i| z.row(i as usize) == first)
        }
        _ => unreachable!("stats and targets disagree"),
    }
}

/// Midpoint of two consecutive distinct values, kept strictly below `b`
/// so that `x <= t` separates them.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let t = 0.5 * a + 0.5 * b;
    if t >= b || t < a {
        a
    } else {
        t
    }
}

/// Best threshold found on one feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FeatureBest {
    pub weighted: f64,
    pub threshold: f64,
    pub left: usize,
}

pub(crate) struct Scanner<'a> {
    pub y: Targets<'a>,
    pub impurity: Impurity,
    pub min_leaf: usize,
    /// `k log₂ k`, long enough for the largest node.
    pub nlogn: &'a [f64],
}

impl Scanner<'_> {
    /// Scans samples `order` (sorted by `col`) for the lowest weighted
    /// child impurity; the first (lowest) threshold wins ties.
    pub(crate) fn scan(&self, col: &[f64], order: &[u32], parent: &NodeStats) -> Option<FeatureBest> {
        let m = order.len();
        if m < 2 * self.min_leaf {
            return None;
        }
        let first = col[order[0] as usize];
        if col[order[m - 1] as usize] == first {
            return None;
        }
        match (parent, self.y) {
            (NodeStats::Classes { counts }, Targets::Classes { labels, .. }) => {
                self.scan_classes(col, order, counts, labels)
            }
            (NodeStats::Outputs { sum, sq_norm }, Targets::Outputs(z)) => {
                self.scan_outputs(col, order, sum, *sq_norm, z)
            }
            _ => unreachable!("stats and targets disagree"),
        }
    }

    fn candidates<'c>(&self, col: &'c [f64], order: &'c [u32]) -> impl Iterator<Item = (usize, Option<f64>)> + 'c {
        // yields (position, threshold if position closes a valid candidate)
        let m = order.len();
        let min_leaf = self.min_leaf;
        (0..m - 1).map(move |i| {
            let ml = i + 1;
            if ml < min_leaf || m - ml < min_leaf {
                return (i, None);
            }
            let a = col[order[i] as usize];
            let b = col[order[i + 1] as usize];
            (i, if a < b { Some(midpoint(a, b)) } else { None })
        })
    }

    fn scan_classes(&self, col: &[f64], order: &[u32], parent: &[usize], labels: &[usize]) -> Option<FeatureBest> {
        let m = order.len();
        let mf = m as f64;
        let mut left = vec![0usize; parent.len()];
        let mut right = parent.to_vec();
        // Σ c² on each side, exact in integers
        let mut sl2: u64 = 0;
        let mut sr2: u64 = parent.iter().map(|&c| (c * c) as u64).sum();
        let mut best: Option<FeatureBest> = None;
        for (i, threshold) in self.candidates(col, order) {
            if m - (i + 1) < self.min_leaf {
                break;
            }
            let c = labels[order[i] as usize];
            sl2 += (2 * left[c] + 1) as u64;
            sr2 -= (2 * right[c] - 1) as u64;
            left[c] += 1;
            right[c] -= 1;
            let Some(threshold) = threshold else { continue };
            let ml = (i + 1) as f64;
            let mr = mf - ml;
            let weighted = match self.impurity {
                Impurity::Gini => 1.0 - (sl2 as f64 / ml + sr2 as f64 / mr) / mf,
                Impurity::Entropy => {
                    let hl: f64 = left.iter().map(|&c| self.nlogn[c]).sum();
                    let hr: f64 = right.iter().map(|&c| self.nlogn[c]).sum();
                    (self.nlogn[i + 1] - hl + self.nlogn[m - i - 1] - hr) / mf
                }
                Impurity::Mse => unreachable!("checked by FitParams::check_targets"),
            };
            if best.is_none_or(|b| weighted < b.weighted) {
                best = Some(FeatureBest {
                    weighted,
                    threshold,
                    left: i + 1,
                });
            }
        }
        best
    }

    fn scan_outputs(&self, col: &[f64], order: &[u32], total: &[f64], sq_norm: f64, z: &Matrix) -> Option<FeatureBest> {
        let m = order.len();
        let mf = m as f64;
        let mut left = vec![0.0; total.len()];
        let mut best: Option<FeatureBest> = None;
        for (i, threshold) in self.candidates(col, order) {
            if m - (i + 1) < self.min_leaf {
                break;
            }
            for (s, v) in left.iter_mut().zip(z.row(order[i] as usize)) {
                *s += v;
            }
            let Some(threshold) = threshold else { continue };
            let ml = (i + 1) as f64;
            let mr = mf - ml;
            let mut nl = 0.0;
            let mut nr = 0.0;
            for (l, t) in left.iter().zip(total) {
                nl += l * l;
                let r = t - l;
                nr += r * r;
            }
            let weighted = (sq_norm - nl / ml - nr / mr) / mf;
            if best.is_none_or(|b| weighted < b.weighted) {
                best = Some(FeatureBest {
                    weighted,
                    threshold,
                    left: i + 1,
                });
            }
        }
        best
    }
}

/// Lowest weighted impurity across features; the lowest feature index
/// wins ties.
pub(crate) fn reduce_features(per_feature: Vec<Option<FeatureBest>>) -> Option<(usize, FeatureBest)> {
    let mut best: Option<(usize, FeatureBest)> = None;
    for (f, cand) in per_feature.into_iter().enumerate() {
        if let Some(c) = cand {
            if best.is_none_or(|(_, b)| c.weighted < b.weighted) {
                best = Some((f, c));
            }
        }
    }
    best
}

/// Sample indices sorted by `col` value, index order within equal values.
pub(crate) fn argsort(col: &[f64], samples: &mut [u32]) {
    samples.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
}

/// Exhaustive split search over all samples of `x`.
///
/// Returns `None` when the node is too small to split, is already pure,
/// has only constant features, or no threshold leaves `min_samples_leaf`
/// samples on both sides.
pub fn best_split(x: &Matrix, y: Targets<'_>, params: &FitParams) -> Result<Option<SplitCandidate>, CartError> {
    best_split_with(x, y, params, par::available())
}

pub fn best_split_with(
    x: &Matrix,
    y: Targets<'_>,
    params: &FitParams,
    parallel: bool,
) -> Result<Option<SplitCandidate>, CartError> {
    params.validate()?;
    super::check_inputs(x, &y, params)?;
    let m = x.rows();
    let samples: Vec<u32> = (0..m as u32).collect();
    let stats = NodeStats::of(&y, &samples);
    if m < params.min_samples_split || is_pure(&y, &samples, &stats) {
        return Ok(None);
    }
    let nlogn = nlogn_table(m);
    let scanner = Scanner {
        y,
        impurity: params.impurity,
        min_leaf: params.min_samples_leaf,
        nlogn: &nlogn,
    };
    let per_feature = par::map_range(x.cols(), parallel, |f| {
        let col: Vec<f64> = (0..m).map(|i| x.get(i, f)).collect();
        let mut order = samples.clone();
        argsort(&col, &mut order);
        scanner.scan(&col, &order, &stats)
    });
    Ok(reduce_features(per_feature).map(|(feature, b)| SplitCandidate {
        feature,
        threshold: b.threshold,
        weighted_impurity: b.weighted.max(0.0),
        left_count: b.left,
        right_count: m - b.left,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_mse_example() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![10.0], vec![11.0]]);
        let z = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![5.0], vec![5.0]]);
        let s = best_split(&x, Targets::Outputs(&z), &FitParams::new(Impurity::Mse))
            .unwrap()
            .unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 6.0);
        assert_eq!(s.weighted_impurity, 0.0);
        assert_eq!((s.left_count, s.right_count), (2, 2));
    }

    #[test]
    fn no_split_cases() {
        let x = Matrix::from_rows(&[vec![1.0, 4.0], vec![2.0, 4.0], vec![3.0, 4.0]]);
        let same = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]);
        let p = FitParams::new(Impurity::Mse);
        assert!(best_split(&x, Targets::Outputs(&same), &p).unwrap().is_none());

        let flat = Matrix::from_rows(&[vec![7.0], vec![7.0], vec![7.0]]);
        let z = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        assert!(best_split(&flat, Targets::Outputs(&z), &p).unwrap().is_none());

        let mut strict = p.clone();
        strict.min_samples_leaf = 2;
        assert!(best_split(&x, Targets::Outputs(&z), &strict).unwrap().is_none());
    }

    #[test]
    fn ties_prefer_lowest_feature_then_threshold() {
        // features 0 and 1 are identical, and both thresholds on each
        // separate the classes equally badly
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        let labels = [0, 1, 1, 0];
        let y = Targets::Classes {
            labels: &labels,
            n_classes: 2,
        };
        let s = best_split(&x, y, &FitParams::new(Impurity::Gini)).unwrap().unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn threshold_between_adjacent_doubles() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(a <= t && t < b);
        assert_eq!(midpoint(-1e308, 1e308), 0.0);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut rng = crate::rng::SeededRng::new(3);
        let x = Matrix::from_vec(120, 6, (0..720).map(|_| (rng.below(9)) as f64).collect());
        let z = Matrix::from_vec(120, 3, (0..360).map(|_| rng.next_f64()).collect());
        let p = FitParams::new(Impurity::Mse);
        let a = best_split_with(&x, Targets::Outputs(&z), &p, false).unwrap();
        let b = best_split_with(&x, Targets::Outputs(&z), &p, true).unwrap();
        assert_eq!(a, b);
    }
}
