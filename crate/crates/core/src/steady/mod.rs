//! Minimisers of the reduced functional `H(ρ) = ∫Ψ(ρ) + E_pot(ρ)` at fixed mass.

mod checks;
mod io;
mod lift;

pub use checks::{
    dynamical_time, equilibrium_checks, scan_mass, symmetry_check, uniqueness_probe,
    EquilibriumReport, MassRow, MassScan, SymmetryReport, UniquenessReport,
};
pub use io::{load_solution, save_solution};
pub use lift::{consistency_check, lift, ConsistencyReport, LiftedState};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::casimir::ConvexModel;
use crate::error::{Error, Result};
use crate::field::{Field, RadialField};
use crate::numeric::{compensated_sum, geometric_grid, tanh_sinh};
use crate::poisson::RadialPotential;

/// Iteration controls for [`solve_reduced`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Damping `θ ∈ (0, 1]`.
    pub theta: f64,
    /// Relative L¹ change per step at convergence.
    pub tol: f64,
    /// Euler–Lagrange residual at convergence.
    pub el_tol: f64,
    pub max_iter: usize,
    /// Consecutive rejected steps before giving up.
    pub max_increases: usize,
    pub grid_points: usize,
    /// Radial grid span in units of the initial guess's half-mass radius.
    pub grid_span: (f64, f64),
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            tol: 1e-8,
            el_tol: 1e-6,
            max_iter: 5000,
            max_increases: 25,
            grid_points: 512,
            grid_span: (1e-3, 20.0),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.tol > 0.0 && self.el_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.grid_points < crate::field::MIN_RADIAL_NODES {
            return Err(Error::Config(format!(
                "grid_points must be at least {}",
                crate::field::MIN_RADIAL_NODES
            )));
        }
        let (lo, hi) = self.grid_span;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!("invalid grid span ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// The reduced variational problem at mass `M`.
#[derive(Debug, Clone)]
pub struct SteadyProblem {
    pub psi: ConvexModel,
    /// Kinetic model `Φ` used for lifting, when known.
    pub phi: Option<ConvexModel>,
    pub mass: f64,
    pub config: SolverConfig,
    /// Starting density; its grid is reused. Defaults to a scanned Gaussian.
    pub initial: Option<RadialField>,
}

impl SteadyProblem {
    pub fn new(psi: ConvexModel, mass: f64) -> Self {
        Self {
            psi,
            phi: None,
            mass,
            config: SolverConfig::default(),
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub e_pot: f64,
    /// `∫Ψ(ρ₀)`.
    pub casimir: f64,
    /// `H(ρ₀)`, the estimate of `h_M`.
    pub h_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖ρ₀ − (Ψ')⁻¹((E₀ − U₀)₊)‖₁ / M`.
    pub el: f64,
    /// `|2∫p(ρ₀) + E_pot| / |E_pot|`.
    pub virial: f64,
    pub hydrostatic: f64,
    /// `|∫ρ₀ − M| / M`.
    pub mass_error: f64,
}

/// Minimiser record.
#[derive(Debug, Clone)]
pub struct SteadyStateSolution {
    pub psi: ConvexModel,
    pub mass: f64,
    pub rho0: RadialField,
    pub u0: RadialField,
    pub e0: f64,
    pub support_radius: f64,
    pub energies: Energies,
    pub residuals: Residuals,
    /// `H` after every accepted step, starting with the initial guess.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub config: SolverConfig,
}

const EDGE_PANELS: usize = 8;

/// `(Ψ')⁻¹(s₊)`.
fn density_from(psi: &ConvexModel, s: f64) -> Result<f64> {
    if s <= 0.0 {
        Ok(0.0)
    } else {
        psi.inv_deriv(s)
    }
}

/// `2π ∫ (Ψ')⁻¹((E₀ − U(r))₊) r dr`.
///
/// Nodal quadrature with the same weights as [`Field::mass`]; when `(Ψ')⁻¹`
/// has a vertical tangent at 0 (index `n < 1`) the edge panel is integrated
/// separately after locating the cutoff radius.
pub fn cutoff_mass(psi: &ConvexModel, u: &RadialField, e0: f64) -> Result<f64> {
    let umin = u.values().iter().copied().fold(f64::INFINITY, f64::min);
    if e0 <= umin {
        return Ok(0.0);
    }
    let rho: Vec<f64> = u
        .values()
        .iter()
        .map(|&v| density_from(psi, e0 - v))
        .collect::<Result<_>>()?;
    let steep_edge = match psi {
        ConvexModel::Polytrope { exponent, .. } => 1.0 / (exponent - 1.0) < 1.0,
        ConvexModel::Tabulated(_) => false,
    };
    if !steep_edge {
        return Ok(u.with_values(rho)?.mass());
    }
    let nodes = u.nodes();
    let uv = u.values();
    // Panels whose far node lies within EDGE_PANELS of a sign change of E₀ − U
    // are integrated with U linear on the panel; the √-type profile there is
    // poorly served by hat interpolation.
    let j = nodes.len();
    let mut near_edge = vec![false; j - 1];
    for k in 0..j - 1 {
        if (e0 - uv[k] > 0.0) != (e0 - uv[k + 1] > 0.0) {
            let lo = k.saturating_sub(EDGE_PANELS);
            let hi = (k + EDGE_PANELS).min(j - 2);
            near_edge[lo..=hi].iter_mut().for_each(|f| *f = true);
        }
    }
    let mut total = PI * nodes[0] * nodes[0] * rho[0];
    for k in 0..j - 1 {
        let (a, b) = (nodes[k], nodes[k + 1]);
        let (sa, sb) = (e0 - uv[k], e0 - uv[k + 1]);
        if sa <= 0.0 && sb <= 0.0 {
            continue;
        }
        if !near_edge[k] {
            total += PI / 3.0 * (b - a) * ((b + 2.0 * a) * rho[k] + (2.0 * b + a) * rho[k + 1]);
            continue;
        }
        let (lo, hi) = if sa > 0.0 && sb > 0.0 {
            (a, b)
        } else {
            let edge = a + sa / (sa - sb) * (b - a);
            if sa > 0.0 {
                (a, edge)
            } else {
                (edge, b)
            }
        };
        let mut failure = None;
        let (v, _) = tanh_sinh(lo, hi, 1e-12, |s| {
            let slack = sa + (s - a) / (b - a) * (sb - sa);
            density_from(psi, slack).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                0.0
            }) * 2.0
                * PI
                * s
        });
        if let Some(e) = failure {
            return Err(e);
        }
        total += v;
    }
    Ok(total)
}

/// Nodal density `(Ψ')⁻¹((E₀ − U)₊)`.
pub fn euler_lagrange_density(psi: &ConvexModel, u: &RadialField, e0: f64) -> Result<RadialField> {
    let rho = u
        .values()
        .iter()
        .map(|&v| density_from(psi, e0 - v))
        .collect::<Result<_>>()?;
    u.with_values(rho)
}

/// Bisects `E₀ ∈ [min U, 0)` so that the cutoff mass equals `mass`.
pub fn lagrange_multiplier(psi: &ConvexModel, u: &RadialField, mass: f64) -> Result<f64> {
    let umin = u.values().iter().copied().fold(f64::INFINITY, f64::min);
    if !(umin < 0.0) {
        return Err(Error::Config("potential is not negative anywhere".into()));
    }
    let top = -1e-300;
    let m_top = cutoff_mass(psi, u, top)?;
    if m_top < mass {
        return Err(Error::Config(format!(
            "mass bracket failure: E₀ → 0 only holds mass {m_top:e} < {mass:e}; enlarge the radial grid"
        )));
    }
    let (mut lo, mut hi) = (umin, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cutoff_mass(psi, u, mid)? < mass {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-12 * hi.abs() {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Potential operator used by the solver: the weight-symmetric part of the
/// ring-kernel matrix, so that fixed points of the iteration are exactly the
/// stationary points of the discrete `H`.
pub fn potential_operator(grid: &RadialField) -> Result<RadialPotential> {
    RadialPotential::on_nodes(grid.nodes())?.symmetrized(grid.area_weights())
}

/// `∫Ψ(ρ)` with the field's quadrature.
pub fn casimir_integral<F: Field>(psi: &ConvexModel, rho: &F) -> Result<f64> {
    let mut terms = Vec::with_capacity(rho.len());
    for (i, &v) in rho.values().iter().enumerate() {
        terms.push(rho.weight(i) * psi.value(v.max(0.0))?);
    }
    Ok(compensated_sum(terms))
}

fn energy(psi: &ConvexModel, rho: &RadialField, u: &RadialField) -> Result<Energies> {
    let casimir = casimir_integral(psi, rho)?;
    let e_pot = crate::poisson::e_pot_from(rho, u)?;
    Ok(Energies {
        e_pot,
        casimir,
        h_value: casimir + e_pot,
    })
}

fn l1_distance(a: &RadialField, b: &RadialField) -> f64 {
    compensated_sum(
        (0..a.len()).map(|i| a.weight(i) * (a.values()[i] - b.values()[i]).abs()),
    )
}

/// `∫Ψ` of the mass-`M` Gaussian with dispersion `σ`.
fn gaussian_casimir(psi: &ConvexModel, mass: f64, sigma: f64) -> Result<f64> {
    let amp = mass / (2.0 * PI * sigma * sigma);
    let mut failure = None;
    // t = exp(−u²/2): ∫Ψ(ρ) dx = 2πσ² ∫₀¹ Ψ(A t)/t dt.
    let (v, _) = tanh_sinh(0.0, 1.0, 1e-10, |t| {
        psi.value(amp * t).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            0.0
        }) / t
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(2.0 * PI * sigma * sigma * v),
    }
}

/// Dispersion minimising `H` over mass-`M` Gaussians (`E_pot = −M²√π/(4σ)`).
pub fn gaussian_scale(psi: &ConvexModel, mass: f64) -> Result<f64> {
    let mut best = (f64::INFINITY, f64::NAN);
    for sigma in geometric_grid(1e-4, 1e4, 321) {
        let h = match gaussian_casimir(psi, mass, sigma) {
            Ok(c) => c - mass * mass * PI.sqrt() / (4.0 * sigma),
            Err(Error::Extrapolation { .. }) => continue,
            Err(e) => return Err(e),
        };
        if h < best.0 {
            best = (h, sigma);
        }
    }
    if best.1.is_nan() {
        return Err(Error::Config("no admissible Gaussian scale for the initial guess".into()));
    }
    Ok(best.1)
}

fn initial_guess(problem: &SteadyProblem) -> Result<RadialField> {
    if let Some(init) = &problem.initial {
        let m = init.mass();
        if !(m > 0.0) {
            return Err(Error::Config("initial density has no mass".into()));
        }
        return Ok(init.map(|v| v * problem.mass / m));
    }
    let sigma = gaussian_scale(&problem.psi, problem.mass)?;
    let r_half = sigma * (2.0 * 2f64.ln()).sqrt();
    let (lo, hi) = problem.config.grid_span;
    let nodes = geometric_grid(lo * r_half, hi * r_half, problem.config.grid_points);
    let amp = problem.mass / (2.0 * PI * sigma * sigma);
    let rho = RadialField::from_fn(nodes, |r| amp * (-r * r / (2.0 * sigma * sigma)).exp())?;
    let m = rho.mass();
    Ok(rho.map(|v| v * problem.mass / m))
}

/// Damped fixed-point iteration `ρ ← (1−θ)ρ + θ (Ψ')⁻¹((E₀ − U_ρ)₊)`.
pub fn solve_reduced(problem: &SteadyProblem) -> Result<SteadyStateSolution> {
    if !(problem.mass > 0.0 && problem.mass.is_finite()) {
        return Err(Error::Config("M must be positive".into()));
    }
    problem.config.validate()?;
    problem.psi.validate()?;
    if let Some(n) = problem.psi.index() {
        if !(n > 0.0 && n < 2.0) {
            return Err(Error::Config(format!("polytropic index n = {n} outside (0, 2)")));
        }
    }
    let cfg = problem.config;
    let psi = &problem.psi;
    let mass = problem.mass;
    let mut rho = initial_guess(problem)?;
    let op = potential_operator(&rho)?;
    let mut u = op.apply(&rho)?;
    let mut h = energy(psi, &rho, &u)?.h_value;
    let mut trace = vec![h];
    let mut theta = cfg.theta;
    let mut increases = 0usize;
    let mut iterations = 0usize;
    loop {
        let e0 = lagrange_multiplier(psi, &u, mass)?;
        let target = euler_lagrange_density(psi, &u, e0)?;
        let el = l1_distance(&rho, &target) / mass;
        // Step size measured at the nominal θ, so that a θ shrunk by rejected
        // steps cannot fake convergence.
        if el <= cfg.el_tol && cfg.theta * el <= cfg.tol {
            log::debug!("converged after {iterations} iterations, EL residual {el:e}");
            // The damped iterate, restricted to {U < E₀}. The undamped image
            // `target` is not returned: near the fixed point the plain map
            // overshoots, so its residual is larger than the iterate's.
            let projected: Vec<f64> = rho
                .values()
                .iter()
                .zip(target.values())
                .map(|(&r, &t)| if t > 0.0 { r } else { 0.0 })
                .collect();
            let rho0 = rho.with_values(projected)?;
            let scale = mass / rho0.mass();
            return finish(problem, rho0.map(|v| v * scale), op, trace, iterations);
        }
        if iterations >= cfg.max_iter {
            return Err(Error::Divergence {
                iterations,
                reason: format!("no convergence within max_iter (EL residual {el:e})"),
            });
        }
        iterations += 1;
        let candidate = rho.with_values(
            rho.values()
                .iter()
                .zip(target.values())
                .map(|(a, b)| (1.0 - theta) * a + theta * b)
                .collect(),
        )?;
        let u_c = op.apply(&candidate)?;
        let h_c = energy(psi, &candidate, &u_c)?.h_value;
        if h_c > h + 1e-13 * h.abs() {
            increases += 1;
            theta *= 0.5;
            log::debug!("H increased ({h_c} > {h}); θ → {theta}");
            if increases >= cfg.max_increases {
                return Err(Error::Divergence {
                    iterations,
                    reason: format!(
                        "H increased for {increases} consecutive steps; try a smaller theta"
                    ),
                });
            }
            continue;
        }
        increases = 0;
        rho = candidate;
        u = u_c;
        h = h_c;
        trace.push(h);
        theta = (theta * 2.0).min(cfg.theta);
    }
}

fn finish(
    problem: &SteadyProblem,
    rho0: RadialField,
    op: RadialPotential,
    trace: Vec<f64>,
    iterations: usize,
) -> Result<SteadyStateSolution> {
    let psi = &problem.psi;
    let u0 = op.apply(&rho0)?;
    let e0 = lagrange_multiplier(psi, &u0, problem.mass)?;
    let energies = energy(psi, &rho0, &u0)?;
    let el = l1_distance(&rho0, &euler_lagrange_density(psi, &u0, e0)?) / problem.mass;
    let support_radius = rho0.support_radius();
    let mut solution = SteadyStateSolution {
        psi: psi.clone(),
        mass: problem.mass,
        rho0,
        u0,
        e0,
        support_radius,
        energies,
        residuals: Residuals {
            el,
            virial: 0.0,
            hydrostatic: 0.0,
            mass_error: 0.0,
        },
        trace,
        iterations,
        config: problem.config,
    };
    let report = equilibrium_checks(&solution, psi)?;
    solution.residuals = Residuals {
        el,
        virial: report.virial,
        hydrostatic: report.hydrostatic,
        mass_error: (solution.rho0.mass() - problem.mass).abs() / problem.mass,
    };
    Ok(solution)
}

impl SteadyStateSolution {
    /// Half-mass radius of `ρ₀`.
    pub fn half_mass_radius(&self) -> f64 {
        self.rho0.half_mass_radius()
    }

    /// Grid nodes where `ρ₀ > 0` disagrees with `U₀ < E₀`.
    pub fn support_mismatches(&self) -> Vec<usize> {
        self.rho0
            .values()
            .iter()
            .zip(self.u0.values())
            .enumerate()
            .filter(|(_, (&r, &u))| (r > 0.0) != (u < self.e0))
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_cutoff_mass() {
        let psi = ConvexModel::polytrope(1.0, 2.0).unwrap();
        let nodes = geometric_grid(1e-4, 3.0, 2048);
        let u = RadialField::from_fn(nodes, |r| (-1.0 + r * r / 4.0).min(0.0)).unwrap();
        let m = cutoff_mass(&psi, &u, -0.5).unwrap();
        assert!((m - PI / 4.0).abs() < 1e-4 * PI / 4.0, "{m}");
        assert_eq!(cutoff_mass(&psi, &u, -1.0).unwrap(), 0.0);
        assert!(cutoff_mass(&psi, &u, -0.4).unwrap() > m);
    }

    #[test]
    fn steep_edge_cutoff_mass_matches_quadrature() {
        // n = 1/2: ρ = (s/(c p))², vertical tangent handled on the edge panel.
        let psi = ConvexModel::polytrope(1.0, 3.0).unwrap();
        let nodes = geometric_grid(1e-4, 3.0, 800);
        let u = RadialField::from_fn(nodes, |r| -1.0 + r * r / 4.0).unwrap();
        let m = cutoff_mass(&psi, &u, -0.5).unwrap();
        // (Ψ')⁻¹(s) = (s/3)^{1/2}; 2π∫₀^{√2} ((1/2 − r²/4)/3)^{1/2} r dr.
        let (exact, _) = tanh_sinh(0.0, 2f64.sqrt(), 1e-14, |r| {
            2.0 * PI * ((0.5 - r * r / 4.0) / 3.0).max(0.0).sqrt() * r
        });
        assert!((m - exact).abs() < 1e-4 * exact, "{m} vs {exact}");
    }

    #[test]
    fn rejects_nonpositive_mass() {
        let psi = ConvexModel::polytrope(1.0, 5.0 / 3.0).unwrap();
        let p = SteadyProblem::new(psi, -1.0);
        assert!(matches!(solve_reduced(&p), Err(Error::Config(_))));
    }
}
