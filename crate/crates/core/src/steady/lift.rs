use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SteadyStateSolution;
use crate::casimir::{reduce_detailed, ConvexModel, ReductionGrid};
use crate::error::{Error, Result};
use crate::field::{Field, RadialField};
use crate::numeric::{compensated_sum, tanh_sinh};

/// Kinetic steady state `f₀(x, v) = (Φ')⁻¹((E₀ − ½|v|² − U₀(x))₊)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftedState {
    pub phi: ConvexModel,
    pub psi: ConvexModel,
    pub mass: f64,
    pub e0: f64,
    pub u0: RadialField,
    /// `f₀` at the bottom of the potential well.
    pub f_max: f64,
    pub support_radius: f64,
}

/// Relative tolerance for accepting `Φ` as the parent of `Ψ`.
const MODEL_MATCH_TOL: f64 = 1e-6;

pub fn lift(solution: &SteadyStateSolution, phi: &ConvexModel) -> Result<LiftedState> {
    let reduced = reduce_detailed(phi, ReductionGrid::default())?;
    check_models_match(&reduced.psi, &solution.psi, &solution.rho0)?;
    let umin = solution
        .u0
        .values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let f_max = phi.inv_deriv((solution.e0 - umin).max(0.0))?;
    Ok(LiftedState {
        phi: phi.clone(),
        psi: solution.psi.clone(),
        mass: solution.mass,
        e0: solution.e0,
        u0: solution.u0.clone(),
        f_max,
        support_radius: solution.support_radius,
    })
}

fn check_models_match(reduced: &ConvexModel, psi: &ConvexModel, rho0: &RadialField) -> Result<()> {
    if let (
        ConvexModel::Polytrope {
            coefficient: c1,
            exponent: p1,
        },
        ConvexModel::Polytrope {
            coefficient: c2,
            exponent: p2,
        },
    ) = (reduced, psi)
    {
        let dc = (c1 - c2).abs() / c2.abs();
        let dp = (p1 - p2).abs();
        if dc > MODEL_MATCH_TOL || dp > MODEL_MATCH_TOL {
            return Err(Error::ModelMismatch(format!(
                "Φ reduces to {c1}·ρ^{p1}, but the solution used {c2}·ρ^{p2}"
            )));
        }
        return Ok(());
    }
    for &r in rho0.values().iter().filter(|&&r| r > 0.0) {
        let (a, b) = (reduced.value(r)?, psi.value(r)?);
        if (a - b).abs() > MODEL_MATCH_TOL * b.abs() {
            return Err(Error::ModelMismatch(format!(
                "Ψ from Φ gives {a} at ρ = {r}, solution model gives {b}"
            )));
        }
    }
    Ok(())
}

impl LiftedState {
    /// Particle energy `½|v|² + U₀(|x|)`.
    pub fn energy(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        0.5 * (v[0] * v[0] + v[1] * v[1]) + self.u0.interpolate(x[0].hypot(x[1]))
    }

    pub fn f0(&self, x: [f64; 2], v: [f64; 2]) -> Result<f64> {
        let slack = self.e0 - self.energy(x, v);
        if slack <= 0.0 {
            return Ok(0.0);
        }
        self.phi.inv_deriv(slack)
    }

    /// Largest speed with `f₀ > 0` at radius `r`.
    pub fn velocity_bound(&self, r: f64) -> f64 {
        (2.0 * (self.e0 - self.u0.interpolate(r))).max(0.0).sqrt()
    }

    /// Phase-space integrals at one radius: `(∫f dv, ∫½|v|² f dv, ∫Φ(f) dv)`.
    pub fn velocity_moments(&self, slack: f64) -> Result<(f64, f64, f64)> {
        if slack <= 0.0 {
            return Ok((0.0, 0.0, 0.0));
        }
        let mut failure = None;
        let mut g = |t: f64| {
            self.phi.inv_deriv(t.max(0.0)).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                0.0
            })
        };
        // dv = 2π ds with s = |v|²/2.
        let (dens, _) = tanh_sinh(0.0, slack, 1e-13, &mut g);
        let (kin, _) = tanh_sinh(0.0, slack, 1e-13, |s| s * g(slack - s));
        let mut casimir_failure = None;
        let (cas, _) = tanh_sinh(0.0, slack, 1e-13, |s| {
            let f = g(slack - s);
            self.phi.value(f).unwrap_or_else(|e| {
                casimir_failure.get_or_insert(e);
                0.0
            })
        });
        if let Some(e) = failure.or(casimir_failure) {
            return Err(e);
        }
        Ok((2.0 * PI * dens, 2.0 * PI * kin, 2.0 * PI * cas))
    }
}

/// Pointwise and integral consistency of a lifted state with its density.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConsistencyReport {
    /// `max |∫f₀ dv − ρ₀| / max ρ₀` over grid nodes.
    pub density_error: f64,
    pub worst_radius: f64,
    pub kinetic: f64,
    pub casimir_f: f64,
    pub casimir_psi: f64,
    pub e_pot: f64,
    /// `H_C(f₀) = E_kin + E_pot + ∫Φ(f₀)`.
    pub h_kinetic: f64,
    /// `H(ρ₀) = ∫Ψ(ρ₀) + E_pot`.
    pub h_reduced: f64,
    pub value_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn consistency_check(lifted: &LiftedState, rho0: &RadialField) -> Result<ConsistencyReport> {
    let tolerance = 1e-4;
    rho0.check_same_grid(&lifted.u0)?;
    let peak = rho0.values().iter().copied().fold(0.0, f64::max);
    let mut density_error: f64 = 0.0;
    let mut worst_radius = 0.0;
    let mut kin = Vec::with_capacity(rho0.len());
    let mut cas = Vec::with_capacity(rho0.len());
    let mut cas_psi = Vec::with_capacity(rho0.len());
    for (i, (&r, &u)) in rho0.nodes().iter().zip(lifted.u0.values()).enumerate() {
        let (d, k, c) = lifted.velocity_moments(lifted.e0 - u)?;
        let target = rho0.values()[i];
        if peak > 0.0 {
            let err = (d - target).abs() / peak;
            if err > density_error {
                density_error = err;
                worst_radius = r;
            }
        }
        let w = rho0.weight(i);
        kin.push(w * k);
        cas.push(w * c);
        cas_psi.push(w * lifted.psi.value(target.max(0.0))?);
    }
    let kinetic = compensated_sum(kin);
    let casimir_f = compensated_sum(cas);
    let casimir_psi = compensated_sum(cas_psi);
    let e_pot = crate::poisson::e_pot_from(rho0, &lifted.u0)?;
    let h_kinetic = kinetic + casimir_f + e_pot;
    let h_reduced = casimir_psi + e_pot;
    let value_error = if h_reduced == 0.0 {
        (h_kinetic - h_reduced).abs()
    } else {
        (h_kinetic - h_reduced).abs() / h_reduced.abs()
    };
    Ok(ConsistencyReport {
        density_error,
        worst_radius,
        kinetic,
        casimir_f,
        casimir_psi,
        e_pot,
        h_kinetic,
        h_reduced,
        value_error,
        tolerance,
        pass: density_error <= tolerance && value_error <= tolerance,
    })
}
