use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use valvemorph::mesh::{extract_surface, smooth_windowed_sinc};
use valvemorph::pipeline::{analyze_volume, PipelineConfig};
use valvemorph::rbf::{Kernel, Rbf};
use valvemorph::Label;
use valvemorph_bench::{phantom, saddle_samples};

fn surfaces(c: &mut Criterion) {
    let vol = phantom(0.4);
    c.bench_function("marching_cubes_annulus", |b| {
        b.iter(|| extract_surface(black_box(&vol), Label::Annulus.code()).unwrap())
    });
    let mesh = extract_surface(&vol, Label::Anterior.code()).unwrap();
    c.bench_function("windowed_sinc_anterior", |b| {
        b.iter(|| smooth_windowed_sinc(black_box(&mesh), 20, 0.1).unwrap())
    });
}

fn rbf(c: &mut Criterion) {
    let (sites, values) = saddle_samples(20);
    c.bench_function("rbf_fit_400", |b| {
        b.iter(|| {
            Rbf::fit(
                Kernel::Polyharmonic5,
                black_box(&sites),
                black_box(&values),
                1e-3,
            )
            .unwrap()
        })
    });
}

fn pipeline(c: &mut Criterion) {
    let vol = phantom(0.5);
    let cfg = PipelineConfig::default();
    let mut g = c.benchmark_group("analyze");
    g.sample_size(10);
    g.bench_function("phantom_0.5mm", |b| {
        b.iter(|| analyze_volume(black_box(&vol), &cfg, "bench").unwrap())
    });
    g.finish();
}

criterion_group!(benches, surfaces, rbf, pipeline);
criterion_main!(benches);
