use criterion::{black_box, criterion_group, criterion_main, Criterion};
use flatgrav_bench::{ensemble, pic_spacing, steady};
use flatgrav_core::dynamics::{deposit, leapfrog_step, PicSolver};

fn pic(c: &mut Criterion) {
    let (solution, lifted) = steady();
    let n = 256;
    let h = pic_spacing(&solution, n);
    let particles = ensemble(&lifted, 200_000);
    let solver = PicSolver::new(n, h).unwrap();

    let mut group = c.benchmark_group("pic");
    group.sample_size(20);
    group.bench_function("deposit Np=2e5 N=256", |b| {
        b.iter(|| deposit(black_box(&particles), n, h).unwrap())
    });
    group.bench_function("fields Np=2e5 N=256", |b| b.iter(|| solver.fields(black_box(&particles)).unwrap()));
    group.bench_function("leapfrog step Np=2e5 N=256", |b| {
        let (acc0, _) = solver.accelerations(&particles).unwrap();
        b.iter_batched(
            || (particles.clone(), acc0.clone()),
            |(mut ens, mut acc)| {
                leapfrog_step(&mut ens, &mut acc, 1e-5, |e| Ok(solver.accelerations(e)?.0)).unwrap();
                ens
            },
            criterion::BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, pic);
criterion_main!(benches);
