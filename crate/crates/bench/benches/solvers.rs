use std::f64::consts::PI;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use flatgrav_bench::phi;
use flatgrav_core::casimir::{reduce_detailed, ReductionGrid};
use flatgrav_core::poisson::{potential_fft, potential_radial};
use flatgrav_core::steady::{solve_reduced, SteadyProblem};
use flatgrav_core::{PlanarField, RadialField};

fn reduction(c: &mut Criterion) {
    c.bench_function("reduce k=1/2", |b| {
        b.iter(|| reduce_detailed(black_box(&phi()), ReductionGrid::default()).unwrap())
    });
}

fn poisson(c: &mut Criterion) {
    let nodes = RadialField::geometric_nodes(1e-3, 1e4, 512);
    let kuzmin = RadialField::from_fn(nodes, |r| 1.0 / (2.0 * PI * (r * r + 1.0).powf(1.5))).unwrap();
    c.bench_function("radial potential J=512", |b| {
        b.iter(|| potential_radial(black_box(&kuzmin), kuzmin.nodes()).unwrap())
    });
    let gaussian = PlanarField::from_fn(256, 0.25, |x, y| (-(x * x + y * y) / 2.0).exp()).unwrap();
    c.bench_function("planar potential N=256", |b| b.iter(|| potential_fft(black_box(&gaussian)).unwrap()));
}

fn steady(c: &mut Criterion) {
    let psi = reduce_detailed(&phi(), ReductionGrid::default()).unwrap().psi;
    let mut group = c.benchmark_group("steady");
    group.sample_size(10);
    group.bench_function("solve M=1 J=512", |b| {
        b.iter(|| solve_reduced(&SteadyProblem::new(psi.clone(), 1.0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, reduction, poisson, steady);
criterion_main!(benches);
