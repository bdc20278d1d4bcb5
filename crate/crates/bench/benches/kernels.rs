use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use apl_core::autodiff::{Tape, Tensor};
use apl_core::survival::c_index;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("matmul");
    for &(m, k, n) in &[(64, 64, 64), (300, 256, 256), (1000, 1024, 256)] {
        let a = random(m, k, &mut rng);
        let b = random(k, n, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{k}x{n}")), &(), |bench, _| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let va = tape.constant(a.clone());
                let vb = tape.constant(b.clone());
                let out = tape.matmul(va, vb).unwrap();
                black_box(tape.value(out).data()[0])
            })
        });
    }
    group.finish();
}

fn concordance(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("c_index");
    for &n in &[100usize, 1000, 10_000] {
        let risks: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &(), |bench, _| {
            bench.iter(|| black_box(c_index(&risks, &times, &events).unwrap().c_index))
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, concordance);
criterion_main!(benches);
