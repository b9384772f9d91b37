//! Offline costs: binning, materialization and the exact error report.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dpbin_core::{build_binning, BinningParams, SqrtFactorization, ToeplitzSpec};
use std::hint::black_box;

fn binning(c: &mut Criterion) {
    let mut group = c.benchmark_group("binning");
    for n in [1024usize, 4096] {
        let spec = ToeplitzSpec::bennett(n).expect("valid");
        let params = BinningParams::new(0.9, 1.0 / n as f64).expect("valid");
        group.bench_function(BenchmarkId::new("build", n), |b| {
            b.iter(|| build_binning(spec.sqrt_rows(), black_box(&params)).size())
        });
    }
    group.finish();
}

fn factorize(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorize");
    group.sample_size(10);
    for n in [128usize, 512] {
        let base = SqrtFactorization::new(ToeplitzSpec::bennett(n).expect("valid")).expect("valid");
        let params = BinningParams::new(0.9, 1.0 / n as f64).expect("valid");
        group.bench_function(BenchmarkId::new("report", n), |b| {
            b.iter(|| base.binned(black_box(&params)).expect("factorizes").report)
        });
    }
    group.finish();
}

criterion_group!(benches, binning, factorize);
criterion_main!(benches);
