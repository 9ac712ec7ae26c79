use std::hint::black_box;

use causal_density::inference::{run_mgvi, InferenceConfig, LikelihoodModel};
use causal_density::pipeline::fit;
use causal_density::Direction;
use causal_density_bench::{model, prepared, settings};
use criterion::{criterion_group, criterion_main, Criterion};

fn latent(dim: usize) -> Vec<f64> {
    (0..dim).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect()
}

fn model_evaluation(c: &mut Criterion) {
    let p = prepared(90, 128, 1);
    let m = model(&p, Direction::XtoY);
    let xi = latent(m.dim());
    c.bench_function("density 90x128", |b| {
        b.iter(|| m.generative().build_density(black_box(&xi)).unwrap())
    });
    c.bench_function("energy 90x128", |b| b.iter(|| m.energy(black_box(&xi))));
    let point = m.linearize(&xi);
    c.bench_function("linearize 90x128", |b| b.iter(|| m.linearize(black_box(&xi))));
    let v = latent(m.dim());
    c.bench_function("fisher 90x128", |b| b.iter(|| m.fisher(&point, black_box(&v))));
}

fn inference(c: &mut Criterion) {
    let p = prepared(24, 32, 2);
    let m = model(&p, Direction::XtoY);
    let config = InferenceConfig {
        n_global_iterations: 3,
        ..InferenceConfig::default()
    };
    let mut group = c.benchmark_group("inference 24x32");
    group.sample_size(10);
    group.bench_function("mgvi 3 iterations", |b| b.iter(|| run_mgvi(&m, &config).unwrap()));
    let s = settings(24, 32);
    group.bench_function("fit with evidence", |b| {
        b.iter(|| fit(&p, Direction::Independent, false, &s, 3).unwrap())
    });
    group.finish();
}

criterion_group!(benches, model_evaluation, inference);
criterion_main!(benches);
