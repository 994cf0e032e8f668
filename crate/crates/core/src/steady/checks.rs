use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{
    casimir_integral, energy, euler_lagrange_density, l1_distance, lagrange_multiplier,
    solve_reduced, Residuals, SolverConfig, SteadyProblem, SteadyStateSolution,
};
use crate::casimir::ConvexModel;
use crate::error::{Error, Result};
use crate::field::{Field, PlanarField, RadialField};
use crate::numeric::compensated_sum;
use crate::poisson::{e_pot_from, PotKernelTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// `max |p(ρ₀)' + ρ₀ U₀'| / max |ρ₀ U₀'|` over the radial grid.
    pub hydrostatic: f64,
    /// `|2∫p(ρ₀) + E_pot| / |E_pot|`.
    pub virial: f64,
    pub el: f64,
    pub e0: f64,
    pub mass_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Hydrostatic, virial and Euler–Lagrange residuals of a (candidate) steady state.
pub fn equilibrium_checks(solution: &SteadyStateSolution, psi: &ConvexModel) -> Result<EquilibriumReport> {
    let tolerance = 1e-3;
    let rho = &solution.rho0;
    let u = &solution.u0;
    rho.check_same_grid(u)?;
    let pressure: Vec<f64> = rho
        .values()
        .iter()
        .map(|&r| psi.pressure(r.max(0.0)))
        .collect::<Result<_>>()?;
    let p_field = rho.with_values(pressure)?;
    let dp = p_field.radial_derivative();
    let du = u.radial_derivative();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..rho.len() {
        let drive = rho.values()[i] * du[i];
        scale = scale.max(drive.abs());
        worst = worst.max((dp[i] + drive).abs());
    }
    let hydrostatic = if scale > 0.0 { worst / scale } else { 0.0 };
    let e_pot = e_pot_from(rho, u)?;
    let twice_p = 2.0 * p_field.mass();
    let virial = if e_pot != 0.0 {
        (twice_p + e_pot).abs() / e_pot.abs()
    } else {
        twice_p.abs()
    };
    let mass = rho.mass();
    let el = if mass > 0.0 {
        l1_distance(rho, &euler_lagrange_density(psi, u, solution.e0)?) / mass
    } else {
        0.0
    };
    let mass_error = if solution.mass > 0.0 {
        (mass - solution.mass).abs() / solution.mass
    } else {
        mass.abs()
    };
    let e0_ok = solution.e0 < 0.0 || mass == 0.0;
    Ok(EquilibriumReport {
        hydrostatic,
        virial,
        el,
        e0: solution.e0,
        mass_error,
        tolerance,
        pass: hydrostatic <= tolerance && virial <= tolerance && e0_ok,
    })
}

impl SteadyStateSolution {
    /// Wraps an arbitrary density (for example an unconverged iterate) with its
    /// potential and mass-matching multiplier so that it can be checked.
    pub fn from_density(psi: &ConvexModel, rho: RadialField) -> Result<Self> {
        let mass = rho.mass();
        let op = super::potential_operator(&rho)?;
        let u = op.apply(&rho)?;
        let e0 = if mass > 0.0 {
            lagrange_multiplier(psi, &u, mass)?
        } else {
            0.0
        };
        let energies = energy(psi, &rho, &u)?;
        let support_radius = rho.support_radius();
        Ok(Self {
            psi: psi.clone(),
            mass,
            rho0: rho,
            u0: u,
            e0,
            support_radius,
            energies,
            residuals: Residuals {
                el: f64::NAN,
                virial: f64::NAN,
                hydrostatic: f64::NAN,
                mass_error: 0.0,
            },
            trace: vec![energies.h_value],
            iterations: 0,
            config: SolverConfig::default(),
        })
    }
}

/// `T_dyn = 2π √(r_h / |F(r_h)|)` with `F` the in-plane radial force.
pub fn dynamical_time(solution: &SteadyStateSolution) -> f64 {
    let r_h = solution.half_mass_radius();
    let du = solution.u0.radial_derivative();
    let grad = solution.u0.with_values(du).expect("same grid").interpolate(r_h);
    2.0 * PI * (r_h / grad.abs()).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassRow {
    pub mass: f64,
    pub h: f64,
    pub e0: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassScan {
    pub rows: Vec<MassRow>,
    pub all_negative: bool,
    /// Pairs `(M̄, M)` violating `h_{M̄} ≥ (M̄/M)^{3/2} h_M`.
    pub violations: Vec<(f64, f64)>,
    /// Fitted exponent of `|h_M| ∝ M^α` (needs two or more masses).
    pub fitted_exponent: Option<f64>,
    /// `(3 − n)/(2 − n)` for polytropic `Ψ`.
    pub expected_exponent: Option<f64>,
}

/// Solves at every mass and checks sign, pairwise scaling inequality and homogeneity.
pub fn scan_mass(psi: &ConvexModel, masses: &[f64], config: SolverConfig) -> Result<MassScan> {
    if masses.is_empty() {
        return Err(Error::Config("mass list is empty".into()));
    }
    if masses.iter().any(|m| !(*m > 0.0)) || masses.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("masses must be positive and strictly increasing".into()));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &m in masses {
        let mut problem = SteadyProblem::new(psi.clone(), m);
        problem.config = config;
        match solve_reduced(&problem) {
            Ok(s) => rows.push(MassRow {
                mass: m,
                h: s.energies.h_value,
                e0: s.e0,
                iterations: s.iterations,
            }),
            Err(e) => failures.push(format!("M = {m}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Partial {
            failed: failures.len(),
            total: masses.len(),
            details: failures.join("; "),
        });
    }
    let all_negative = rows.iter().all(|r| r.h < 0.0);
    let mut violations = Vec::new();
    for (i, small) in rows.iter().enumerate() {
        for large in &rows[i + 1..] {
            let bound = (small.mass / large.mass).powf(1.5) * large.h;
            if small.h < bound {
                violations.push((small.mass, large.mass));
            }
        }
    }
    let fitted_exponent = if rows.len() >= 2 {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.mass.ln(), r.h.abs().ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let expected_exponent = psi.index().map(|n| (3.0 - n) / (2.0 - n));
    Ok(MassScan {
        rows,
        all_negative,
        violations,
        fitted_exponent,
        expected_exponent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub h_planar: f64,
    /// `(mode m, amplitude, H(perturbed) − H(ρ₀))` on the Cartesian grid.
    pub deltas: Vec<(u32, f64, f64)>,
    pub pass: bool,
}

/// A-posteriori check that non-radial, mass-preserving perturbations
/// `ρ₀(1 + ε cos mθ)` raise `H` on a Cartesian grid.
pub fn symmetry_check(solution: &SteadyStateSolution, n: usize, amplitude: f64) -> Result<SymmetryReport> {
    let support = solution.support_radius.max(solution.half_mass_radius());
    let h = 5.0 * support / n as f64;
    let table = PotKernelTable::new(n, h)?;
    let base = PlanarField::from_radial(n, h, &solution.rho0, [0.0, 0.0])?;
    let energy_of = |rho: &PlanarField| -> Result<f64> {
        let u = table.potential(rho)?;
        let e = 0.5
            * rho.h()
            * rho.h()
            * compensated_sum(rho.values().iter().zip(u.values()).map(|(a, b)| a * b));
        Ok(casimir_integral(&solution.psi, rho)? + e)
    };
    let h_planar = energy_of(&base)?;
    let mut deltas = Vec::new();
    for m in [2u32, 3, 4] {
        let pert = PlanarField::from_fn(n, h, |x, y| {
            let r = x.hypot(y);
            let th = y.atan2(x);
            solution.rho0.interpolate(r) * (1.0 + amplitude * (m as f64 * th).cos())
        })?;
        deltas.push((m, amplitude, energy_of(&pert)? - h_planar));
    }
    let pass = deltas.iter().all(|d| d.2 > 0.0);
    Ok(SymmetryReport {
        h_planar,
        deltas,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// `(initial width factor, h, relative L¹ distance to the reference minimiser)`.
    pub runs: Vec<(f64, f64, f64)>,
    pub max_distance: f64,
    pub max_h_spread: f64,
}

/// Re-solves from Gaussians of rescaled width on the reference grid and reports
/// how far the resulting minimisers are from `reference`. Differences are data,
/// not failures.
pub fn uniqueness_probe(
    problem: &SteadyProblem,
    reference: &SteadyStateSolution,
    width_factors: &[f64],
) -> Result<UniquenessReport> {
    let sigma = super::gaussian_scale(&problem.psi, problem.mass)?;
    let nodes = reference.rho0.nodes().to_vec();
    let mut runs = Vec::new();
    for &f in width_factors {
        let s = sigma * f;
        let init = RadialField::from_fn(nodes.clone(), |r| (-r * r / (2.0 * s * s)).exp())?;
        let mut p = problem.clone();
        p.initial = Some(init);
        let sol = solve_reduced(&p)?;
        let dist = l1_distance(&sol.rho0, &reference.rho0) / problem.mass;
        runs.push((f, sol.energies.h_value, dist));
    }
    let max_distance = runs.iter().map(|r| r.2).fold(0.0, f64::max);
    let h_ref = reference.energies.h_value;
    let max_h_spread = runs
        .iter()
        .map(|r| (r.1 - h_ref).abs() / h_ref.abs())
        .fold(0.0, f64::max);
    Ok(UniquenessReport {
        runs,
        max_distance,
        max_h_spread,
    })
}
