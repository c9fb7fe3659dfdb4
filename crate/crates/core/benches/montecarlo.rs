use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlss::codec::{build, ArchSpec};
use mlss::montecarlo::{simulate_point_with, Execution, NetworkLink, StopRule, WalshLink};

fn waves(c: &mut Criterion) {
    let rule = StopRule {
        min_errors: u64::MAX,
        max_bits: 1,
    };
    let model = build(ArchSpec::reference_one_hot(), 1).unwrap();
    let net = NetworkLink::new(&model, 256).unwrap();
    let wh = WalshLink { blocks_per_batch: 256 };
    let mut g = c.benchmark_group("one_wave");
    g.sample_size(20);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let name = format!("{exec:?}");
        g.bench_with_input(BenchmarkId::new("onehot_network", &name), &exec, |b, &e| {
            b.iter(|| simulate_point_with(&net, 4.0, &rule, 7, 0, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("walsh_hadamard", &name), &exec, |b, &e| {
            b.iter(|| simulate_point_with(&wh, 4.0, &rule, 7, 0, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, waves);
criterion_main!(benches);
