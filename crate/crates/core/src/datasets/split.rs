use super::{DatasetError, LabeledDataset};
use crate::rng::SeededRng;

/// Per-class test quotas by largest remainder: each quota is within one
/// instance of `test_size * class_count / n`.
fn class_quotas(counts: &[usize], n: usize, test_size: usize) -> Vec<usize> {
    let mut quotas: Vec<usize> = counts.iter().map(|&c| test_size * c / n).collect();
    let assigned: usize = quotas.iter().sum();
    let mut by_remainder: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .map(|(class, &c)| (test_size * c % n, class))
        .collect();
    // largest remainder first, lower class index on ties
    by_remainder.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, class) in by_remainder.iter().take(test_size - assigned) {
        quotas[class] += 1;
    }
    quotas
}

/// Index-level stratified split. Both index lists come back sorted.
pub fn stratified_split_indices(
    labels: &[usize],
    n_classes: usize,
    test_size: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    let n = labels.len();
    if test_size >= n {
        return Err(DatasetError::TestSizeTooLarge { test_size, n });
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(DatasetError::LabelOutOfRange { label: l, n_classes });
        }
        by_class[l].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quotas = class_quotas(&counts, n, test_size);

    let mut rng = SeededRng::new(seed);
    let mut train = Vec::with_capacity(n - test_size);
    let mut test = Vec::with_capacity(test_size);
    for (members, quota) in by_class.iter_mut().zip(quotas) {
        rng.shuffle(members);
        test.extend_from_slice(&members[..quota]);
        train.extend_from_slice(&members[quota..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Seeded stratified partition whose test class mix matches the full set.
pub fn stratified_split(
    ds: &LabeledDataset,
    test_size: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DatasetError> {
    let (train, test) = stratified_split_indices(ds.labels(), ds.n_classes(), test_size, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[derive(Debug, Clone)]
pub struct MnistSplits {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
}

/// Drops `validation_size` instances (chosen by a seeded shuffle) from the
/// official MNIST training set; 60,000 − 5,000 leaves the 55,000 used for
/// training. The validation part is returned but never used downstream.
pub fn mnist_protocol(
    full_train: LabeledDataset,
    validation_size: usize,
    seed: u64,
) -> Result<MnistSplits, DatasetError> {
    let n = full_train.len();
    if validation_size >= n {
        return Err(DatasetError::TestSizeTooLarge {
            test_size: validation_size,
            n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let mut validation = order[..validation_size].to_vec();
    let mut train = order[validation_size..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(MnistSplits {
        train: full_train.subset(&train),
        validation: full_train.subset(&validation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use proptest::prelude::*;

    fn labels_with_counts(counts: &[usize]) -> Vec<usize> {
        // interleave classes so the input is not grouped
        let mut out = Vec::new();
        let mut left = counts.to_vec();
        while left.iter().any(|&c| c > 0) {
            for (class, c) in left.iter_mut().enumerate() {
                if *c > 0 {
                    out.push(class);
                    *c -= 1;
                }
            }
        }
        out
    }

    #[test]
    fn connect4_class_mix() {
        // published class counts of the full Connect-4 data
        let labels = labels_with_counts(&[44_473, 16_635, 6_449]);
        let (train, test) = stratified_split_indices(&labels, 3, 10_000, 42).unwrap();
        assert_eq!(train.len(), 57_557);
        let mut counts = [0usize; 3];
        for &i in &test {
            counts[labels[i]] += 1;
        }
        let pct: Vec<f64> = counts.iter().map(|&c| c as f64 / 100.0).collect();
        assert!((pct[0] - 65.83).abs() < 0.01, "{pct:?}");
        assert!((pct[1] - 24.62).abs() < 0.01, "{pct:?}");
        assert!((pct[2] - 9.55).abs() < 0.01, "{pct:?}");
    }

    #[test]
    fn same_seed_same_partition() {
        let labels = labels_with_counts(&[50, 30, 20]);
        let a = stratified_split_indices(&labels, 3, 17, 9).unwrap();
        let b = stratified_split_indices(&labels, 3, 17, 9).unwrap();
        assert_eq!(a, b);
        let c = stratified_split_indices(&labels, 3, 17, 10).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn test_size_equal_to_n_is_an_error() {
        let labels = vec![0, 1, 0];
        assert!(matches!(
            stratified_split_indices(&labels, 2, 3, 0),
            Err(DatasetError::TestSizeTooLarge { test_size: 3, n: 3 })
        ));
    }

    #[test]
    fn mnist_protocol_counts() {
        let n = 60;
        let f = Matrix::from_vec(n, 1, (0..n).map(|v| v as f64).collect());
        let ds = LabeledDataset::new(
            f,
            (0..n).map(|i| i % 10).collect(),
            10,
            LabeledDataset::numbered_classes(10),
        )
        .unwrap();
        let s = mnist_protocol(ds, 5, 1).unwrap();
        assert_eq!(s.train.len(), 55);
        assert_eq!(s.validation.len(), 5);
        let mut all: Vec<f64> = s.train.features().as_slice().to_vec();
        all.extend_from_slice(s.validation.features().as_slice());
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..n).map(|v| v as f64).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn split_is_exhaustive_disjoint_and_stratified(
            counts in prop::collection::vec(1usize..60, 1..5),
            frac in 0.0f64..0.95,
            seed in any::<u64>(),
        ) {
            let labels = labels_with_counts(&counts);
            let n = labels.len();
            let test_size = ((n as f64) * frac) as usize;
            prop_assume!(test_size < n);
            let (train, test) =
                stratified_split_indices(&labels, counts.len(), test_size, seed).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(test.len(), test_size);
            if test_size > 0 {
                for (class, &full) in counts.iter().enumerate() {
                    let tc = test.iter().filter(|&&i| labels[i] == class).count();
                    let dev = (tc as f64 / test_size as f64 - full as f64 / n as f64).abs();
                    prop_assert!(dev <= 1.0 / test_size as f64 + 1.0 / n as f64);
                }
            }
        }
    }
}
