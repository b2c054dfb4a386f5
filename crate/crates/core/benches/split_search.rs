use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use treedistill::cart::{best_split_with, fit_with, FitParams, Impurity, Targets};
use treedistill::linalg::Matrix;
use treedistill::rng::SeededRng;

fn problem(m: usize, d: usize, k: usize) -> (Matrix, Matrix, Vec<usize>) {
    let mut rng = SeededRng::new(5);
    let x = Matrix::from_vec(m, d, (0..m * d).map(|_| (rng.below(256) as f64) / 255.0).collect());
    let z = Matrix::from_vec(m, k, (0..m * k).map(|_| rng.next_f64() * 10.0 - 5.0).collect());
    let labels = (0..m).map(|_| rng.below(k as u64) as usize).collect();
    (x, z, labels)
}

fn root_split(c: &mut Criterion) {
    let (x, z, labels) = problem(5000, 64, 10);
    let mut group = c.benchmark_group("root_split");
    for parallel in [false, true] {
        let mode = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::new("mse", mode), &parallel, |b, &p| {
            b.iter(|| best_split_with(&x, Targets::Outputs(&z), &FitParams::new(Impurity::Mse), p).unwrap())
        });
        let y = Targets::Classes {
            labels: &labels,
            n_classes: 10,
        };
        group.bench_with_input(BenchmarkId::new("gini", mode), &parallel, |b, &p| {
            b.iter(|| best_split_with(&x, y, &FitParams::new(Impurity::Gini), p).unwrap())
        });
    }
    group.finish();
}

fn depth_limited_fit(c: &mut Criterion) {
    let (x, z, _) = problem(20_000, 64, 10);
    let params = FitParams::new(Impurity::Mse).with_max_depth(Some(8));
    let mut group = c.benchmark_group("fit_depth_8");
    group.sample_size(10);
    for parallel in [false, true] {
        let mode = if parallel { "parallel" } else { "sequential" };
        group.bench_function(mode, |b| {
            b.iter(|| black_box(fit_with(&x, Targets::Outputs(&z), &params, parallel).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, root_split, depth_limited_fit);
criterion_main!(benches);
