use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nearfield_core::beamforming::{focus_weights, gain_map, gain_vs_frequency, ttd_pdf};
use nearfield_core::capacity::singular_values;
use nearfield_core::codebook::polar_codebook;
use nearfield_core::estimation::{omp, simulate_pilots};
use nearfield_core::propagation::{los_mimo_channel, spherical_steering};
use nearfield_core::{build_ula, AmplitudeModel, CarrierConfig, PolarPoint, Rotation3, SPEED_OF_LIGHT};

const F: f64 = 28e9;

fn steering(c: &mut Criterion) {
    let g = build_ula(256, SPEED_OF_LIGHT / F / 2.0).unwrap();
    let p = PolarPoint::new(0.3, 20.0).unwrap();
    c.bench_function("spherical_steering_256", |b| {
        b.iter(|| spherical_steering(black_box(&g), F, black_box(&p)).unwrap())
    });
}

fn codebook(c: &mut Criterion) {
    let g = build_ula(128, SPEED_OF_LIGHT / F / 2.0).unwrap();
    let mut group = c.benchmark_group("codebook");
    group.sample_size(10);
    group.bench_function("polar_128", |b| {
        b.iter(|| polar_codebook(black_box(&g), F, 128, 0.5, 1.0).unwrap())
    });
    group.finish();
}

fn estimation(c: &mut Criterion) {
    let g = build_ula(256, SPEED_OF_LIGHT / F / 2.0).unwrap();
    let cb = polar_codebook(&g, F, 256, 0.5, 3.5).unwrap();
    let h = spherical_steering(&g, F, &PolarPoint::new(0.1, 30.0).unwrap())
        .unwrap()
        .entries;
    let (y, sys) = simulate_pilots(&h, 64, 20.0, 1).unwrap();
    let mut group = c.benchmark_group("estimation");
    group.sample_size(20);
    group.bench_function("omp_256x64_k2", |b| {
        b.iter(|| omp(black_box(&y), &sys, &cb, 2, 0.0).unwrap())
    });
    group.finish();
}

fn beamforming(c: &mut Criterion) {
    let g = build_ula(256, SPEED_OF_LIGHT / F / 2.0).unwrap();
    let p = PolarPoint::new(0.2, 15.0).unwrap();
    let w = focus_weights(&g, F, &p).unwrap();
    let angles: Vec<f64> = (0..50).map(|i| -1.0 + 0.04 * i as f64).collect();
    let distances: Vec<f64> = (0..50).map(|j| 2.0 + j as f64).collect();
    c.bench_function("gain_map_256_50x50", |b| {
        b.iter(|| gain_map(&g, F, &w, black_box(&angles), black_box(&distances)).unwrap())
    });

    let g100 = build_ula(256, SPEED_OF_LIGHT / 100e9 / 2.0).unwrap();
    let carrier = CarrierConfig::new(100e9, 10e9, 128).unwrap();
    let target = PolarPoint::from_degrees(30.0, 10.0).unwrap();
    let wb = ttd_pdf(&g100, &carrier, &target, 16).unwrap();
    c.bench_function("ttd_sweep_256x128", |b| {
        b.iter(|| gain_vs_frequency(&g100, &carrier, black_box(&wb), &target).unwrap())
    });
}

fn capacity(c: &mut Criterion) {
    let spacing = SPEED_OF_LIGHT / F / 2.0;
    let g = build_ula(281, spacing).unwrap();
    let h = los_mimo_channel(
        &g,
        &g,
        F,
        &PolarPoint::new(0.0, 10.0).unwrap(),
        &Rotation3::identity(),
        AmplitudeModel::FreeSpace,
    )
    .unwrap();
    let mut group = c.benchmark_group("capacity");
    group.sample_size(10);
    group.bench_function("singular_values_281", |b| {
        b.iter(|| singular_values(black_box(&h.entries)))
    });
    group.finish();
}

criterion_group!(benches, steering, codebook, estimation, beamforming, capacity);
criterion_main!(benches);
