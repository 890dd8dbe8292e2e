use criterion::{criterion_group, criterion_main, Criterion};
use fedpg_bench::{bench_config, bench_graph};
use fedpg_core::engine::Federation;

fn one_round(c: &mut Criterion) {
    let g = bench_graph(2000, 500);
    let mut group = c.benchmark_group("round");
    group.sample_size(10);
    for method in ["fedpg", "fedproto-naive", "fedavg"] {
        let cfg = bench_config(method);
        group.bench_function(method, |b| {
            b.iter_batched(
                || Federation::from_graph(cfg.clone(), &g).unwrap(),
                |mut fed| {
                    fed.run_round().unwrap();
                    fed
                },
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, one_round);
criterion_main!(benches);
