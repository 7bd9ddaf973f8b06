//! Compares the rayon-parallel and sequential code paths of the hot loops:
//! greedy candidate scoring, the pruned single-question scan, and brute-force
//! subset enumeration.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ccq_core::harness::{generate, GeneratorSpec};
use ccq_core::select::{
    brute_force_select, greedy_select, select_sccq, select_sccq_pruned, GreedyOptions, PruningFlags,
};
use ccq_core::AccuracyModel;
use ccq_core::ResultSet;

fn corpus(n_matchings: usize, n_correspondences: usize) -> ResultSet {
    generate(&GeneratorSpec {
        n_matchings,
        n_correspondences,
        concentration: 1.0,
        overlap: 0.4,
        seed: 17,
    })
    .expect("benchmark corpus generates")
    .result_set
}

fn bench_greedy(c: &mut Criterion) {
    let rs = corpus(400, 60);
    let model = AccuracyModel::constant(0.8).unwrap();
    let mut group = c.benchmark_group("greedy_select_k8");
    for (label, parallel) in [("sequential", false), ("parallel", true)] {
        for flags in [PruningFlags::none(), PruningFlags::all()] {
            let pruned = if flags == PruningFlags::all() {
                "pruned"
            } else {
                "unpruned"
            };
            let options = GreedyOptions {
                flags,
                parallel,
                ..GreedyOptions::default()
            };
            group.bench_with_input(BenchmarkId::new(label, pruned), &options, |b, options| {
                b.iter(|| black_box(greedy_select(&rs, 8, &model, options).unwrap()))
            });
        }
    }
    group.finish();
}

fn bench_sccq_scan(c: &mut Criterion) {
    let rs = corpus(400, 60);
    let model = AccuracyModel::constant(0.8).unwrap();
    let mut group = c.benchmark_group("sccq_scan");
    group.bench_function("exhaustive", |b| {
        b.iter(|| black_box(select_sccq(&rs, &model).unwrap()))
    });
    group.bench_function("pruned", |b| {
        b.iter(|| black_box(select_sccq_pruned(&rs, &model).unwrap()))
    });
    group.finish();
}

fn bench_brute_force(c: &mut Criterion) {
    let rs = corpus(20, 12);
    let model = AccuracyModel::constant(0.8).unwrap();
    let mut group = c.benchmark_group("brute_force_k3");
    group.bench_function("enumerate", |b| {
        b.iter(|| black_box(brute_force_select(&rs, 3, &model, Some(1 << 20)).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_greedy, bench_sccq_scan, bench_brute_force);
criterion_main!(benches);
