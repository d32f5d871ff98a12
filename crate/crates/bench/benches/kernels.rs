//! Criterion benchmarks for the serial oracles and small mesh runs.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use meshgrain::algebra::{serial_matmul, serial_strassen, Matrix, Semiring};

fn bench_serial_products(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = Matrix::random(64, Semiring::PlusMul, &mut rng);
    let b = Matrix::random(64, Semiring::PlusMul, &mut rng);
    c.bench_function("serial_matmul_64", |bench| {
        bench.iter(|| serial_matmul(&a, &b).unwrap())
    });
    c.bench_function("serial_strassen_64_t8", |bench| {
        bench.iter(|| serial_strassen(&a, &b, 8).unwrap())
    });
}

criterion_group!(benches, bench_serial_products);
criterion_main!(benches);
