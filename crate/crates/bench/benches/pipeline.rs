use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use loopdet::{
    count_distribution_coherent, reconstruct_svd, response_matrix, response_matrix_bruteforce,
    simulate_coherent, DetectorParams, SimOptions, DEFAULT_SV_THRESHOLD,
};
use std::hint::black_box;

fn detector(roundtrips: usize) -> DetectorParams {
    DetectorParams::new(0.72, 0.2, 0.8, 0.01, roundtrips).unwrap()
}

fn response(c: &mut Criterion) {
    let mut g = c.benchmark_group("response_matrix");
    for (l, n_max) in [(10, 5), (50, 5), (50, 15), (100, 30)] {
        let p = detector(l);
        g.bench_with_input(
            BenchmarkId::new("series", format!("L{l}_n{n_max}")),
            &n_max,
            |b, &n| b.iter(|| response_matrix(black_box(&p), n).unwrap()),
        );
    }
    let p = detector(4);
    g.bench_function("bruteforce/L4_n4", |b| {
        b.iter(|| response_matrix_bruteforce(black_box(&p), 4).unwrap())
    });
    g.finish();
}

fn coherent(c: &mut Criterion) {
    let mut g = c.benchmark_group("count_distribution_coherent");
    for l in [50, 500, 2000] {
        let p = detector(l);
        g.bench_with_input(BenchmarkId::from_parameter(l), &p, |b, p| {
            b.iter(|| count_distribution_coherent(black_box(p), 1.0).unwrap())
        });
    }
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_coherent");
    g.sample_size(10);
    let p = detector(50);
    for workers in [1, 4] {
        let opts = SimOptions {
            workers: Some(workers),
        };
        g.bench_with_input(
            BenchmarkId::new("1e5_trials", workers),
            &opts,
            |b, &opts| b.iter(|| simulate_coherent(&p, 1.0, 100_000, 0, opts).unwrap()),
        );
    }
    g.finish();
}

fn reconstruct(c: &mut Criterion) {
    let p = detector(50);
    let w = response_matrix(&p, 5).unwrap();
    let hist = simulate_coherent(&p, 1.0, 100_000, 0, SimOptions::default()).unwrap();
    c.bench_function("reconstruct_svd/L50_n5", |b| {
        b.iter(|| reconstruct_svd(black_box(&w), black_box(&hist), DEFAULT_SV_THRESHOLD).unwrap())
    });
}

criterion_group!(benches, response, coherent, simulate, reconstruct);
criterion_main!(benches);
