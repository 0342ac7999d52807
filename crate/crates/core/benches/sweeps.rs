use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graphnls::corpus::{self, CorpusConfig, Family};
use graphnls::curvature::{self, CdForms};
use graphnls::{inequality, AscentOptions};
use rayon::ThreadPoolBuilder;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        (
            "1-thread",
            ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
        ("default", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn corpus_sweep(c: &mut Criterion) {
    let cfg = CorpusConfig {
        families: vec![Family::Cycle, Family::Random],
        random_count: 16,
        ..Default::default()
    };
    let mut group = c.benchmark_group("corpus");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("run_corpus", name), |b| {
            b.iter(|| pool.install(|| corpus::run_corpus(&cfg)))
        });
    }
    group.finish();
}

fn cd_forms(c: &mut Criterion) {
    let g = corpus::random_connected(40, 0.1, 10.0, 7);
    let mut group = c.benchmark_group("curvature");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("forms", name), |b| {
            b.iter(|| pool.install(|| CdForms::new(&g)))
        });
        group.bench_function(BenchmarkId::new("verify_cd", name), |b| {
            b.iter(|| pool.install(|| curvature::verify_cd(&g, 2.0, 0.0).unwrap()))
        });
    }
    group.finish();
}

fn trudinger_moser(c: &mut Criterion) {
    let g = corpus::random_connected(12, 0.1, 10.0, 3);
    let opts = AscentOptions::default();
    let mut group = c.benchmark_group("trudinger-moser");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("sup_estimate", name), |b| {
            b.iter(|| pool.install(|| inequality::tm_sup_estimate(&g, 2.0, 3.0, &opts).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, corpus_sweep, cd_forms, trudinger_moser);
criterion_main!(benches);
