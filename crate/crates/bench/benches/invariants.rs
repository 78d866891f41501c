use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oddchern::clifford::{key_identity_lhs, CliffordRep, KeyIdentityParams};
use oddchern::flatband::{contour_flatband, spectral_flatband, ContourOptions, DEFAULT_GAP_TOL};
use oddchern::invariants::{fedosov_index, kspace_odd_chern, realspace_odd_chern, FedosovOptions, RealSpaceOptions};
use oddchern::models::{model1, model2, realize};
use oddchern::{DiracPhase, SampleSeed};
use std::hint::black_box;

fn kspace(c: &mut Criterion) {
    let model = model1(0.5);
    let mut g = c.benchmark_group("kspace_d1");
    for grid in [256, 4096] {
        g.bench_with_input(BenchmarkId::from_parameter(grid), &grid, |b, &n| {
            b.iter(|| kspace_odd_chern(black_box(&model), n).unwrap())
        });
    }
    g.finish();
}

fn flat_band(c: &mut Criterion) {
    let mut g = c.benchmark_group("flatband_d1");
    for size in [64, 256] {
        let real = realize(&model2(0.5, 1.0, 1.0), size, Some(SampleSeed::new(1, 0))).unwrap();
        g.bench_with_input(BenchmarkId::new("polar", size), &real, |b, r| {
            b.iter(|| spectral_flatband(black_box(r), DEFAULT_GAP_TOL).unwrap())
        });
        if size <= 64 {
            g.bench_with_input(BenchmarkId::new("contour", size), &real, |b, r| {
                b.iter(|| contour_flatband(black_box(r), &ContourOptions::default()).unwrap())
            });
        }
    }
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let real = realize(&model2(0.5, 1.0, 1.0), 256, Some(SampleSeed::new(1, 0))).unwrap();
    let fb = spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap();
    let phase = DiracPhase::centered(fb.torus(), &[0.5]).unwrap();
    let mut g = c.benchmark_group("estimators_d1_L256");
    g.bench_function("realspace", |b| {
        b.iter(|| realspace_odd_chern(black_box(&fb), &RealSpaceOptions::default()).unwrap())
    });
    g.bench_function("fedosov_R64", |b| {
        b.iter(|| fedosov_index(black_box(&fb), &phase, &FedosovOptions::new(64)).unwrap())
    });
    g.finish();
}

fn key_identity(c: &mut Criterion) {
    let rep = CliffordRep::new(3).unwrap();
    let points = vec![vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.3], vec![0.1, 0.0, 1.0]];
    let params = KeyIdentityParams { samples: 1 << 14, ..KeyIdentityParams::default() };
    c.bench_function("key_identity_d3_16k", |b| {
        b.iter(|| key_identity_lhs(&rep, black_box(&points), &params).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = kspace, flat_band, estimators, key_identity
}
criterion_main!(benches);
