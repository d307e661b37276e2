use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ctxzoom_bench::{taxonomy, tent};
use ctxzoom_core::harness::{run_experiment, AlgorithmSpec};
use ctxzoom_core::space::{covering_number, packing_number};

fn bench_rounds(c: &mut Criterion) {
    let env = tent(33);
    let mut group = c.benchmark_group("rounds_1000");
    group.sample_size(10);
    for algo in [
        AlgorithmSpec::Zooming,
        AlgorithmSpec::Uniform,
        AlgorithmSpec::Exp3,
    ] {
        group.bench_with_input(
            BenchmarkId::from_parameter(algo.label()),
            &algo,
            |b, algo| {
                b.iter(|| run_experiment(&env, algo, 1_000, 0, false).unwrap());
            },
        );
    }
    group.finish();

    let tax_env = taxonomy(63);
    c.bench_function("taxonomy_rounds_1000", |b| {
        b.iter(|| {
            run_experiment(
                &tax_env,
                &AlgorithmSpec::Taxonomy { q_hat: 0.25 },
                1_000,
                0,
                false,
            )
            .unwrap()
        });
    });
}

fn bench_cover(c: &mut Criterion) {
    let env = tent(33);
    let pairs = env.feasible_pair_points();
    let product = env.product_space();
    c.bench_function("greedy_cover_1089pts", |b| {
        b.iter(|| covering_number(product, &pairs, 0.125));
    });
    c.bench_function("greedy_packing_1089pts", |b| {
        b.iter(|| packing_number(product, &pairs, 0.125));
    });
}

criterion_group!(benches, bench_rounds, bench_cover);
criterion_main!(benches);
