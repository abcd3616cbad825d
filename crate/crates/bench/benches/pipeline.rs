use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use linoptics::calibration::calibrate;
use linoptics::experiment::{phi_grid, synthesize_measured_trace, xf, ExperimentConfig, SynthParams};
use linoptics::fitting::{fit, FitModel, FitOptions};
use linoptics::synthesis::{haar_unitary, qft3_circuit, reck_decompose};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn optics(c: &mut Criterion) {
    let circuit = qft3_circuit();
    c.bench_function("compose qft3", |b| b.iter(|| black_box(&circuit).compose().unwrap()));

    let u = haar_unitary(8, &mut ChaCha8Rng::seed_from_u64(1));
    c.bench_function("reck_decompose d=8", |b| b.iter(|| reck_decompose(black_box(&u), 1e-11).unwrap()));
}

fn calibration(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    c.bench_function("calibrate defaults", |b| b.iter(|| calibrate(black_box(&cfg)).unwrap()));
}

fn fitting(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let centre = xf(&cfg);
    let offsets = [-0.25, 0.16, -0.20, -0.28];
    let truth = cfg.with_x(std::array::from_fn(|i| centre[i] + offsets[i]));
    let params = SynthParams {
        noise_sigma: 0.005,
        seed: 3,
        ..SynthParams::default()
    };
    let trace = synthesize_measured_trace(&truth, &params, &phi_grid(720)).unwrap();
    let init = FitModel::at_fourier_point(&cfg);
    let single = FitOptions {
        start_offsets: Vec::new(),
        ..FitOptions::default()
    };
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("single start, 720 points", |b| {
        b.iter(|| fit(black_box(&trace), &cfg, &init, &single).unwrap())
    });
    group.bench_function("81 starts, 720 points", |b| {
        b.iter(|| fit(black_box(&trace), &cfg, &init, &FitOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, optics, calibration, fitting);
criterion_main!(benches);
