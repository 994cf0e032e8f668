use std::f64::consts::PI;
use std::sync::OnceLock;

use flatgrav_core::casimir::{reduce_detailed, ReductionGrid};
use flatgrav_core::dynamics::*;
use flatgrav_core::poisson::{best_shift_distance, pot_norm};
use flatgrav_core::steady::*;
use flatgrav_core::{ConvexModel, Error, Field, PlanarField};

fn phi() -> ConvexModel {
    ConvexModel::polytrope_k(1.0, 0.5).unwrap()
}

fn state() -> &'static (SteadyStateSolution, LiftedState) {
    static S: OnceLock<(SteadyStateSolution, LiftedState)> = OnceLock::new();
    S.get_or_init(|| {
        let psi = reduce_detailed(&phi(), ReductionGrid::default()).unwrap().psi;
        let s = solve_reduced(&SteadyProblem::new(psi, 1.0)).unwrap();
        let l = lift(&s, &phi()).unwrap();
        (s, l)
    })
}

#[test]
fn samples_lie_inside_the_energy_support() {
    let (_, l) = state();
    let e = sample_steady(l, 5000, 7).unwrap();
    assert_eq!(e.len(), 5000);
    for (x, v) in e.pos.iter().zip(&e.vel) {
        assert!(l.energy(*x, *v) < l.e0);
    }
    let p = e.momentum();
    assert!(p[0].abs() < 1e-12 && p[1].abs() < 1e-12, "{p:?}");
}

#[test]
fn sampling_is_deterministic() {
    let (_, l) = state();
    assert_eq!(sample_steady(l, 2000, 3).unwrap(), sample_steady(l, 2000, 3).unwrap());
    assert_ne!(sample_steady(l, 2000, 3).unwrap(), sample_steady(l, 2000, 4).unwrap());
}

#[test]
fn kinetic_energy_within_three_sigma() {
    let (s, l) = state();
    let report = consistency_check(l, &s.rho0).unwrap();
    let np = 40_000;
    let e = sample_steady(l, np, 11).unwrap();
    let k: Vec<f64> = e.vel.iter().map(|v| 0.5 * (v[0] * v[0] + v[1] * v[1])).collect();
    let mean = k.iter().sum::<f64>() / np as f64;
    let var = k.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (np - 1) as f64;
    // Antithetic partners share |v|: Np/2 independent draws, each counted twice.
    let sigma = e.weight * (2.0 * np as f64 * var).sqrt();
    let diff = (e.kinetic_energy() - report.kinetic).abs();
    assert!(diff < 3.0 * sigma, "{diff} vs σ = {sigma}");
}

#[test]
fn deposit_error_scales_like_inverse_sqrt_np() {
    let (s, l) = state();
    let n = 64;
    let h = 4.0 * s.support_radius / n as f64;
    let rho0 = PlanarField::from_radial(n, h, &s.rho0, [0.0, 0.0]).unwrap();
    let err = |np: usize| {
        let mut acc = 0.0;
        for seed in 0..4 {
            let rho = deposit(&sample_steady(l, np, 100 + seed).unwrap(), n, h).unwrap();
            let l1: f64 = rho.values().iter().zip(rho0.values()).map(|(a, b)| (a - b).abs()).sum();
            acc += l1 * h * h / s.mass;
        }
        acc / 4.0
    };
    let ratio = err(10_000) / err(40_000);
    assert!((1.7..2.3).contains(&ratio), "{ratio}");
}

#[test]
fn position_scaling_distance_is_first_order() {
    let (s, l) = state();
    let n = 128;
    let h = 6.0 * s.support_radius / n as f64;
    let base = sample_steady(l, 50_000, 5).unwrap();
    let rho1 = deposit(&base, n, h).unwrap();
    let dist = |lambda: f64| {
        let p = perturb(&base, &Perturbation::PositionScale { factor: lambda }, 0).unwrap();
        best_shift_distance(&deposit(&p, n, h).unwrap(), &rho1).unwrap().distance
    };
    let (d1, d2) = (dist(1.01), dist(1.02));
    assert!(d1 > 0.0);
    assert!((d2 / d1 - 2.0).abs() < 0.2, "{d1} {d2}");
    assert!(d1 < 0.05 * pot_norm(&rho1).unwrap());
}

#[test]
fn kuzmin_circular_orbit_keeps_radius() {
    // U = −1/√(r²+1); circular speed at r = 1 is v² = 2^{−3/2}.
    let accel = |x: [f64; 2]| {
        let s = (x[0] * x[0] + x[1] * x[1] + 1.0).powf(-1.5);
        [-x[0] * s, -x[1] * s]
    };
    let v = 2f64.powf(-0.75);
    let period = 2.0 * PI / v;
    let dt = 1e-3 * period;
    let mut e = ParticleEnsemble::new(vec![[1.0, 0.0]], vec![[0.0, v]], 1.0, 0).unwrap();
    let mut acc = vec![accel(e.pos[0])];
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        leapfrog_step(&mut e, &mut acc, dt, |e| Ok(vec![accel(e.pos[0])])).unwrap();
        worst = worst.max((e.pos[0][0].hypot(e.pos[0][1]) - 1.0).abs());
    }
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn leapfrog_energy_error_is_second_order() {
    let accel = |x: [f64; 2]| {
        let s = (x[0] * x[0] + x[1] * x[1] + 1.0).powf(-1.5);
        [-x[0] * s, -x[1] * s]
    };
    let energy = |x: [f64; 2], v: [f64; 2]| 0.5 * (v[0] * v[0] + v[1] * v[1]) - 1.0 / (x[0] * x[0] + x[1] * x[1] + 1.0).sqrt();
    let v0 = 0.8 * 2f64.powf(-0.75);
    let period = 2.0 * PI / 2f64.powf(-0.75);
    let max_err = |steps: usize| {
        let dt = 2.0 * period / steps as f64;
        let mut e = ParticleEnsemble::new(vec![[1.0, 0.0]], vec![[0.0, v0]], 1.0, 0).unwrap();
        let e0 = energy(e.pos[0], e.vel[0]);
        let mut acc = vec![accel(e.pos[0])];
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            leapfrog_step(&mut e, &mut acc, dt, |e| Ok(vec![accel(e.pos[0])])).unwrap();
            worst = worst.max((energy(e.pos[0], e.vel[0]) - e0).abs());
        }
        worst
    };
    let ratio = max_err(400) / max_err(800);
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}

#[test]
fn dynamical_time_halves_for_four_times_the_mass() {
    let (s, _) = state();
    let base = SteadyStateSolution::from_density(&s.psi, s.rho0.clone()).unwrap();
    let heavy = SteadyStateSolution::from_density(&s.psi, s.rho0.map(|v| 4.0 * v)).unwrap();
    let (t1, t4) = (dynamical_time(&base), dynamical_time(&heavy));
    assert!(t1.is_finite() && t1 > 0.0);
    assert!((t4 / t1 - 0.5).abs() < 1e-12, "{}", t4 / t1);
}

fn small_config() -> SimConfig {
    SimConfig {
        dt: 0.02,
        t_end: 1.0,
        n: 64,
        box_factor: 6.0,
        diag_every: 0.25,
        snapshot_every: Some(0.5),
        np: 20_000,
        seed: 9,
        drift_tolerance: 1e-3,
    }
}

#[test]
fn short_run_invariants() {
    let (s, l) = state();
    let out = run(s, l, &small_config(), &Perturbation::None).unwrap();
    let rows = &out.series.rows;
    assert_eq!(rows.len(), 5);
    assert_eq!(out.snapshots.len(), 3);
    let v_rms = sample_steady(l, 20_000, 9).unwrap().v_rms();
    assert!(out.max_momentum_step <= 1e-6 * s.mass * v_rms, "{}", out.max_momentum_step);
    for w in rows.windows(2) {
        assert!(w[1].t > w[0].t);
    }
    for r in rows {
        assert!(r.shift_distance <= r.raw_distance * (1.0 + 1e-12));
        assert!(r.d_reduced >= -1e-12);
        assert_eq!(r.norm_ratio, 1.0);
        assert_eq!(r.mass, s.mass);
    }
    assert!(out.energy_drift < 1e-2, "{}", out.energy_drift);
}

#[test]
fn runs_are_bit_identical() {
    let (s, l) = state();
    let mut cfg = small_config();
    cfg.t_end = 0.2;
    let a = run(s, l, &cfg, &Perturbation::VelocityNoise { relative: 0.01 }).unwrap();
    let b = run(s, l, &cfg, &Perturbation::VelocityNoise { relative: 0.01 }).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.series.write_csv(&mut ca).unwrap();
    b.series.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(a.final_ensemble, b.final_ensemble);
    assert!(String::from_utf8(ca).unwrap().starts_with(DIAGNOSTICS_HEADER));
}

#[test]
fn bad_envelope_is_reported() {
    let (_, l) = state();
    let mut loose = l.clone();
    loose.f_max *= 1e6;
    assert!(matches!(sample_steady(&loose, 100, 1), Err(Error::Envelope { .. })));
}

#[test]
fn oversized_step_is_rejected() {
    let (s, l) = state();
    let mut cfg = small_config();
    cfg.dt = 0.05;
    assert!(matches!(run(s, l, &cfg, &Perturbation::None), Err(Error::Config(_))));
}

#[test]
fn scale_norm_ratio_is_recorded() {
    let (s, l) = state();
    let mut cfg = small_config();
    cfg.t_end = 0.1;
    let out = run(s, l, &cfg, &Perturbation::PositionScale { factor: 1.01 }).unwrap();
    // p = 3: ratio λ^{2/3 − 2}.
    let expected = 1.01f64.powf(2.0 / 3.0 - 2.0);
    assert!((out.series.rows[0].norm_ratio - expected).abs() < 1e-12);
}
