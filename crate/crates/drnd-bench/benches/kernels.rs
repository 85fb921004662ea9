//! Benchmarks for the hot numeric kernels: MLP forward/backward, the
//! distillation step, the bonus evaluation, and ensemble moments.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use drnd_bench::bonus_fixture;
use drnd_core::bonus::{bonus, bonus_input_grad, distill_step, moments, sample_c};
use drnd_core::nn::{mlp_backward, mlp_forward};
use drnd_core::rng::Rng64;

fn bench_mlp(c: &mut Criterion) {
    let fx = bonus_fixture(64, 32, 10).unwrap();
    c.bench_function("mlp_forward_64x32", |b| {
        b.iter(|| mlp_forward(&fx.pred.params, black_box(&fx.input)).unwrap())
    });
    let upstream = vec![1.0; 32];
    c.bench_function("mlp_backward_64x32", |b| {
        b.iter(|| mlp_backward(&fx.pred.params, black_box(&fx.input), &upstream).unwrap())
    });
}

fn bench_bonus(c: &mut Criterion) {
    let fx = bonus_fixture(64, 32, 10).unwrap();
    c.bench_function("moments_n10", |b| {
        b.iter(|| moments(&fx.ens, black_box(&fx.input)).unwrap())
    });
    c.bench_function("bonus_total", |b| {
        b.iter(|| bonus(&fx.pred, &fx.ens, black_box(&fx.input), &fx.cfg).unwrap())
    });
    c.bench_function("bonus_input_grad", |b| {
        b.iter(|| bonus_input_grad(&fx.pred, &fx.ens, black_box(&fx.input), &fx.cfg).unwrap())
    });
}

fn bench_distill(c: &mut Criterion) {
    let mut fx = bonus_fixture(64, 32, 10).unwrap();
    let mut rng = Rng64::new(3);
    let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..64)
        .map(|_| {
            let x: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
            let cdraw = sample_c(&fx.ens, &x, &mut rng).unwrap();
            (x, cdraw)
        })
        .collect();
    c.bench_function("distill_step_batch64", |b| {
        b.iter(|| distill_step(&mut fx.pred, black_box(&batch)).unwrap())
    });
}

criterion_group!(benches, bench_mlp, bench_bonus, bench_distill);
criterion_main!(benches);
