use std::hint::black_box;

use assort_bench::general_fixture;
use assort_core::generate::neg_correlated;
use assort_core::solvers::{adxopt_solve, assort_mnl, assort_mnl_capacitated, exhaustive_solve};
use assort_core::{CapacityConstraint, EncodedPointSet, LshIndex, LshParams, MipsBackend};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const EPSILON: f64 = 1e-4;

fn general(c: &mut Criterion) {
    let mut group = c.benchmark_group("general");
    group.sample_size(10);
    for count in [2_000, 10_000, 50_000] {
        let (inst, coll) = general_fixture(1000, count, 1);
        group.bench_with_input(BenchmarkId::new("exhaustive", count), &count, |b, _| {
            b.iter(|| exhaustive_solve(black_box(&inst), black_box(&coll)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mnl-exact", count), &count, |b, _| {
            b.iter(|| assort_mnl(&inst, &coll, EPSILON, &MipsBackend::Exact).unwrap())
        });
        let lsh = MipsBackend::Lsh(LshParams::default());
        group.bench_with_input(BenchmarkId::new("mnl-lsh", count), &count, |b, _| {
            b.iter(|| assort_mnl(&inst, &coll, EPSILON, &lsh).unwrap())
        });
    }
    group.finish();
}

fn index(c: &mut Criterion) {
    let mut group = c.benchmark_group("lsh-index");
    group.sample_size(10);
    let (inst, coll) = general_fixture(1000, 10_000, 2);
    let (normalized, _) = inst.normalize().unwrap();
    let points = EncodedPointSet::encode(&normalized, &coll).unwrap();
    group.bench_function("build", |b| {
        b.iter(|| LshIndex::build(&points, &LshParams::default()).unwrap())
    });
    group.finish();
}

fn capacitated(c: &mut Criterion) {
    let mut group = c.benchmark_group("capacitated");
    for n in [100, 1000, 5000] {
        let inst = neg_correlated(n, 3).unwrap();
        let constraint = CapacityConstraint::upper_bound(10);
        group.bench_with_input(BenchmarkId::new("threshold-search", n), &n, |b, _| {
            b.iter(|| assort_mnl_capacitated(&inst, &constraint, 1e-3).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("adxopt", n), &n, |b, _| {
            b.iter(|| adxopt_solve(&inst, 10, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, general, index, capacitated);
criterion_main!(benches);
