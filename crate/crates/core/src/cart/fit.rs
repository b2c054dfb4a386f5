//! Greedy top-down tree growth.
//!
//! Every feature is sorted once at the root into its own segment of a
//! `(d + 1) × n` index buffer (the extra segment holds sample ids in
//! arbitrary order). A node owns the same `start..end` range in every
//! segment; after a split each segment range is stably partitioned into
//! its left and right samples, so children stay sorted without re-sorting
//! and a node costs O(d · M).

use super::impurity::nlogn_table;
use super::split::{argsort, is_pure, reduce_features, NodeStats, Scanner};
use super::{check_inputs, CartError, FitParams, Split, Targets, Tree, TreeMode, TreeNode};
use crate::linalg::Matrix;
use crate::par;

/// Below this many (sample, feature) pairs a node is searched sequentially.
const PARALLEL_NODE_WORK: usize = 1 << 14;

pub fn fit(x: &Matrix, y: Targets<'_>, params: &FitParams) -> Result<Tree, CartError> {
    fit_with(x, y, params, par::available())
}

pub fn fit_with(x: &Matrix, y: Targets<'_>, params: &FitParams, parallel: bool) -> Result<Tree, CartError> {
    params.validate()?;
    check_inputs(x, &y, params)?;
    let (n, d) = (x.rows(), x.cols());
    let mode = match y {
        Targets::Classes { n_classes, .. } => TreeMode::Classify { n_classes },
        Targets::Outputs(z) => TreeMode::Regress { n_outputs: z.cols() },
    };

    let mut cols = vec![0.0; n * d];
    for (i, row) in x.iter_rows().enumerate() {
        for (f, &v) in row.iter().enumerate() {
            cols[f * n + i] = v;
        }
    }
    let mut order = vec![0u32; n * (d + 1)];
    par::for_each_chunk_mut(&mut order, n, parallel, |f, seg| {
        for (i, s) in seg.iter_mut().enumerate() {
            *s = i as u32;
        }
        if f < d {
            argsort(&cols[f * n..(f + 1) * n], seg);
        }
    });

    let nlogn = nlogn_table(n);
    let scanner = Scanner {
        y,
        impurity: params.impurity,
        min_leaf: params.min_samples_leaf,
        nlogn: &nlogn,
    };
    let mut goes_left = vec![false; n];
    let mut nodes = vec![TreeNode {
        split: None,
        value: Vec::new(),
        n_samples: 0,
    }];
    let mut stack = vec![(0usize, 0usize, n, 0usize)];
    while let Some((id, start, end, depth)) = stack.pop() {
        let m = end - start;
        let ids = &order[d * n + start..d * n + end];
        let stats = NodeStats::of(&y, ids);
        nodes[id].value = stats.value(m);
        nodes[id].n_samples = m;
        if params.max_depth.is_some_and(|max| depth >= max) || m < params.min_samples_split || is_pure(&y, ids, &stats)
        {
            continue;
        }
        let node_parallel = parallel && m * d >= PARALLEL_NODE_WORK;
        let per_feature = par::map_range(d, node_parallel, |f| {
            scanner.scan(&cols[f * n..(f + 1) * n], &order[f * n + start..f * n + end], &stats)
        });
        let Some((feature, best)) = reduce_features(per_feature) else {
            continue;
        };

        let mid = start + best.left;
        for &i in &order[feature * n + start..feature * n + mid] {
            goes_left[i as usize] = true;
        }
        par::for_each_chunk_mut(&mut order, n, node_parallel, |f, seg| {
            if f != feature {
                stable_partition(&mut seg[start..end], &goes_left);
            }
        });
        for &i in &order[feature * n + start..feature * n + mid] {
            goes_left[i as usize] = false;
        }

        let left = nodes.len();
        let right = left + 1;
        for _ in 0..2 {
            nodes.push(TreeNode {
                split: None,
                value: Vec::new(),
                n_samples: 0,
            });
        }
        nodes[id].split = Some(Split {
            feature,
            threshold: best.threshold,
            left,
            right,
        });
        stack.push((right, mid, end, depth + 1));
        stack.push((left, start, mid, depth + 1));
    }
    Ok(Tree::from_parts(nodes, mode, d, params.clone()))
}

fn stable_partition(seg: &mut [u32], goes_left: &[bool]) {
    let mut right = Vec::with_capacity(seg.len());
    let mut w = 0;
    for k in 0..seg.len() {
        let s = seg[k];
        if goes_left[s as usize] {
            seg[w] = s;
            w += 1;
        } else {
            right.push(s);
        }
    }
    seg[w..].copy_from_slice(&right);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::Impurity;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn classes(labels: &[usize], n_classes: usize) -> Targets<'_> {
        Targets::Classes { labels, n_classes }
    }

    #[test]
    fn depth_zero_predicts_global_mean() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 3.0], vec![3.0, 3.0]]);
        let p = FitParams::new(Impurity::Mse).with_max_depth(Some(0));
        let t = fit(&x, Targets::Outputs(&z), &p).unwrap();
        assert_eq!(t.nodes().len(), 1);
        for v in [-5.0, 1.0, 9.0] {
            assert_eq!(t.predict(&[v]).unwrap(), &[2.0, 2.0]);
        }
        let labels = [1, 1, 0];
        let p = FitParams::new(Impurity::Gini).with_max_depth(Some(0));
        let t = fit(&x, classes(&labels, 2), &p).unwrap();
        assert_eq!(t.predict_class(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn xor_needs_two_levels() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let labels = [0, 1, 1, 0];
        let p = FitParams::new(Impurity::Gini).with_max_depth(Some(2));
        let t = fit(&x, classes(&labels, 2), &p).unwrap();
        for (row, &l) in x.iter_rows().zip(&labels) {
            assert_eq!(t.predict_class(row).unwrap(), l);
        }
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn one_dimensional_tree_prediction() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![10.0], vec![11.0]]);
        let z = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![5.0], vec![5.0]]);
        let t = fit(&x, Targets::Outputs(&z), &FitParams::new(Impurity::Mse)).unwrap();
        assert_eq!(t.predict(&[3.0]).unwrap(), &[0.0]);
        assert_eq!(t.predict(&[6.0]).unwrap(), &[0.0]);
        assert_eq!(t.predict(&[6.5]).unwrap(), &[5.0]);
    }

    #[test]
    fn unbounded_tree_memorizes_distinct_rows() {
        let mut rng = SeededRng::new(4);
        let x = Matrix::from_vec(300, 3, (0..900).map(|_| rng.next_f64()).collect());
        let labels: Vec<usize> = (0..300).map(|_| rng.below(4) as usize).collect();
        let t = fit(&x, classes(&labels, 4), &FitParams::new(Impurity::Entropy)).unwrap();
        for (row, &l) in x.iter_rows().zip(&labels) {
            assert_eq!(t.predict_class(row).unwrap(), l);
        }
    }

    #[test]
    fn input_errors() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        let p = FitParams::new(Impurity::Gini);
        assert!(matches!(
            fit(&Matrix::zeros(0, 1), classes(&[], 2), &p),
            Err(CartError::Empty)
        ));
        assert!(matches!(
            fit(&x, classes(&[0], 2), &p),
            Err(CartError::RowMismatch { .. })
        ));
        assert!(matches!(
            fit(&x, classes(&[0, 2], 2), &p),
            Err(CartError::LabelOutOfRange { .. })
        ));
        let z = Matrix::from_rows(&[vec![0.0], vec![f64::NAN]]);
        assert!(fit(&x, Targets::Outputs(&z), &FitParams::new(Impurity::Mse)).is_err());
        assert!(matches!(
            fit(&x, Targets::Outputs(&z), &p),
            Err(CartError::ModeMismatch(_))
        ));
    }

    #[test]
    fn truncation_equals_shallower_fit() {
        let mut rng = SeededRng::new(8);
        let x = Matrix::from_vec(400, 5, (0..2000).map(|_| rng.below(20) as f64).collect());
        let z = Matrix::from_vec(400, 3, (0..1200).map(|_| rng.next_f64() * 4.0 - 2.0).collect());
        let labels: Vec<usize> = (0..400).map(|_| rng.below(3) as usize).collect();
        for (imp, y) in [
            (Impurity::Mse, Targets::Outputs(&z)),
            (Impurity::Gini, classes(&labels, 3)),
        ] {
            let deep = fit(&x, y, &FitParams::new(imp).with_max_depth(Some(9))).unwrap();
            for depth in 0..9 {
                let direct = fit(&x, y, &FitParams::new(imp).with_max_depth(Some(depth))).unwrap();
                let cut = deep.truncated(depth);
                for row in x.iter_rows() {
                    assert_eq!(cut.predict(row).unwrap(), direct.predict(row).unwrap());
                }
                assert_eq!(cut.n_leaves(), direct.n_leaves());
            }
        }
    }

    #[test]
    fn sequential_and_parallel_trees_match() {
        let mut rng = SeededRng::new(10);
        let x = Matrix::from_vec(3000, 8, (0..24_000).map(|_| rng.below(50) as f64).collect());
        let z = Matrix::from_vec(3000, 4, (0..12_000).map(|_| rng.next_f64()).collect());
        let p = FitParams::new(Impurity::Mse).with_max_depth(Some(8));
        let a = fit_with(&x, Targets::Outputs(&z), &p, false).unwrap();
        let b = fit_with(&x, Targets::Outputs(&z), &p, true).unwrap();
        assert_eq!(a, b);
    }

    fn dataset(n: usize, d: usize, k: usize, seed: u64) -> (Matrix, Matrix, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        // few distinct values so ties and duplicate rows occur
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.below(6) as f64 * 0.5).collect());
        // dyadic targets keep running sums exact
        let z = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.below(16) as f64 / 4.0).collect());
        let labels = (0..n).map(|_| rng.below(k as u64) as usize).collect();
        (x, z, labels)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn structural_invariants(
            n in 1usize..120, d in 1usize..5, k in 1usize..4,
            depth in prop::option::of(0usize..7),
            min_leaf in 1usize..4, min_split in 2usize..6,
            seed in any::<u64>(),
        ) {
            let (x, z, labels) = dataset(n, d, k, seed);
            for (imp, y) in [
                (Impurity::Mse, Targets::Outputs(&z)),
                (Impurity::Gini, classes(&labels, k)),
                (Impurity::Entropy, classes(&labels, k)),
            ] {
                let p = FitParams { max_depth: depth, min_samples_split: min_split, min_samples_leaf: min_leaf, impurity: imp };
                let t = fit(&x, y, &p).unwrap();
                if let Some(max) = depth {
                    prop_assert!(t.depth() <= max);
                }
                // route every sample; leaf counts add up
                let mut seen = vec![Vec::new(); t.nodes().len()];
                for (i, row) in x.iter_rows().enumerate() {
                    seen[t.apply(row).unwrap()].push(i);
                }
                for (node, members) in t.nodes().iter().zip(&seen) {
                    if let Some(s) = node.split {
                        let (l, r) = (&t.nodes()[s.left], &t.nodes()[s.right]);
                        prop_assert_eq!(l.n_samples + r.n_samples, node.n_samples);
                        prop_assert!(l.n_samples >= min_leaf && r.n_samples >= min_leaf);
                        prop_assert!(node.n_samples >= min_split);
                        prop_assert!(s.threshold.is_finite());
                        continue;
                    }
                    prop_assert_eq!(members.len(), node.n_samples);
                    prop_assert_eq!(node.value.len(), k);
                    // leaf value is the mean of what lands there
                    match y {
                        Targets::Outputs(z) => for j in 0..k {
                            let mean = members.iter().map(|&i| z.get(i, j)).sum::<f64>() / members.len() as f64;
                            prop_assert!((node.value[j] - mean).abs() <= 1e-12);
                        },
                        Targets::Classes { labels, .. } => for c in 0..k {
                            let frac = members.iter().filter(|&&i| labels[i] == c).count() as f64 / members.len() as f64;
                            prop_assert!((node.value[c] - frac).abs() <= 1e-12);
                        },
                    }
                }
            }
        }

        #[test]
        fn sample_order_does_not_matter(n in 2usize..100, d in 1usize..4, seed in any::<u64>()) {
            let (x, z, labels) = dataset(n, d, 3, seed);
            let mut perm: Vec<usize> = (0..n).collect();
            SeededRng::new(seed ^ 1).shuffle(&mut perm);
            let xp = x.select_rows(&perm);
            let zp = z.select_rows(&perm);
            let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
            for imp in [Impurity::Gini, Impurity::Entropy, Impurity::Mse] {
                let p = FitParams::new(imp);
                let (a, b) = if imp == Impurity::Mse {
                    (fit(&x, Targets::Outputs(&z), &p).unwrap(), fit(&xp, Targets::Outputs(&zp), &p).unwrap())
                } else {
                    (fit(&x, classes(&labels, 3), &p).unwrap(), fit(&xp, classes(&lp, 3), &p).unwrap())
                };
                for row in x.iter_rows() {
                    prop_assert_eq!(a.predict(row).unwrap(), b.predict(row).unwrap());
                }
            }
        }
    }
}
