use serde::{Deserialize, Serialize};

use super::{CheckReport, Profile};
use crate::casimir::ConvexModel;
use crate::error::{Error, Result};
use crate::field::{Field, RadialField};
use crate::poisson::{e_pot_from, RadialPotential};
use crate::steady::casimir_integral;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSettings {
    pub grid_points: usize,
    /// Radial grid span in units of the profile's extent.
    pub span: (f64, f64),
    pub tol: f64,
}

impl Default for ScalingSettings {
    fn default() -> Self {
        Self {
            grid_points: 512,
            span: (1e-4, 12.0),
            tol: 1e-4,
        }
    }
}

struct Sampled {
    rho: RadialField,
    op: RadialPotential,
}

impl Sampled {
    fn new(profile: &Profile, settings: &ScalingSettings) -> Result<Self> {
        if !(settings.span.0 > 0.0 && settings.span.1 > settings.span.0) {
            return Err(Error::Config(format!("invalid radial span {:?}", settings.span)));
        }
        let ext = profile.extent();
        let nodes = RadialField::geometric_nodes(settings.span.0 * ext, settings.span.1 * ext, settings.grid_points);
        let rho = RadialField::from_fn(nodes, |r| profile.radial(r))?;
        let op = RadialPotential::on_nodes(rho.nodes())?;
        Ok(Self { rho, op })
    }

    /// `a ρ(b x)` on the same nodes; errors when it does not vanish at the outer node.
    fn rescaled(&self, profile: &Profile, a: f64, b: f64) -> Result<RadialField> {
        let out = RadialField::from_fn(self.rho.nodes().to_vec(), |r| a * profile.radial(b * r))?;
        let peak = out.values().iter().copied().fold(0.0, f64::max);
        let last = *out.values().last().expect("non-empty");
        if last > 1e-12 * peak {
            return Err(Error::BoxSize(format!(
                "rescaled profile is {:.3e} of its peak at the outer radius {}",
                last / peak,
                out.outer_radius()
            )));
        }
        Ok(out)
    }

    fn e_pot(&self, rho: &RadialField) -> Result<f64> {
        e_pot_from(rho, &self.op.apply(rho)?)
    }
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs()
}

fn check_params(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("scaling parameters must be positive, got a = {a}, b = {b}")));
    }
    Ok(())
}

/// `ρ̄(x) = aρ(bx)` sampled on the same radial grid as `ρ`: mass factor
/// `ab⁻²`, potential-energy factor `a²b⁻³` and `∫Ψ(ρ̄) = b⁻²∫Ψ(aρ)`.
pub fn check_scaling(
    psi: &ConvexModel,
    profile: &Profile,
    a: f64,
    b: f64,
    settings: &ScalingSettings,
) -> Result<CheckReport> {
    check_params(a, b)?;
    let s = Sampled::new(profile, settings)?;
    let bar = s.rescaled(profile, a, b)?;
    let mut report = CheckReport::new(
        &format!("scaling/a={a},b={b}"),
        "ρ̄ = aρ(b·): ∫ρ̄ = ab⁻²∫ρ, E_pot(ρ̄) = a²b⁻³E_pot(ρ), ∫Ψ(ρ̄) = b⁻²∫Ψ(aρ)",
        &(psi, profile, a, b, settings),
        settings.tol,
    );
    let mass_factor = bar.mass() / s.rho.mass();
    report.info("mass_factor", mass_factor);
    report.at_most("mass_identity", rel(mass_factor, a / (b * b)), settings.tol);
    let epot_factor = s.e_pot(&bar)? / s.e_pot(&s.rho)?;
    report.info("e_pot_factor", epot_factor);
    report.at_most("e_pot_identity", rel(epot_factor, a * a / (b * b * b)), settings.tol);
    let lhs = casimir_integral(psi, &bar)?;
    let rhs = casimir_integral(psi, &s.rho.map(|v| a * v))? / (b * b);
    report.at_most("casimir_identity", rel(lhs, rhs), settings.tol);
    Ok(report)
}

/// Mass-preserving family `a = b²`: `H(ρ̄) = b⁻²∫Ψ(b²ρ) + b E_pot(ρ)` for
/// each `b`, and `H(ρ̄) < 0` at the smallest `b`.
pub fn check_dilation(
    psi: &ConvexModel,
    profile: &Profile,
    bs: &[f64],
    settings: &ScalingSettings,
) -> Result<CheckReport> {
    if bs.is_empty() {
        return Err(Error::Config("no dilation factors given".into()));
    }
    let s = Sampled::new(profile, settings)?;
    let e_pot = s.e_pot(&s.rho)?;
    let mut report = CheckReport::new(
        "scaling/dilation",
        "a = b²: H(ρ̄) = b⁻²∫Ψ(b²ρ) + b·E_pot(ρ), negative for small b",
        &(psi, profile, bs, settings),
        settings.tol,
    );
    let mut smallest = (f64::INFINITY, f64::NAN);
    for &b in bs {
        check_params(b * b, b)?;
        let bar = s.rescaled(profile, b * b, b)?;
        let direct = casimir_integral(psi, &bar)? + s.e_pot(&bar)?;
        let formula = casimir_integral(psi, &s.rho.map(|v| b * b * v))? / (b * b) + b * e_pot;
        report.info(&format!("h(b={b})"), direct);
        report.at_most(&format!("identity(b={b})"), rel(direct, formula), settings.tol);
        if b < smallest.0 {
            smallest = (b, direct);
        }
    }
    report.at_most("h_at_smallest_b", smallest.1, 0.0);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian() -> Profile {
        Profile::Gaussian {
            mass: 1.0,
            width: 1.0,
            center: [0.0, 0.0],
        }
    }

    #[test]
    fn identity_scaling_is_exact() {
        let psi = ConvexModel::polytrope(1.0, 5.0 / 3.0).unwrap();
        let r = check_scaling(&psi, &gaussian(), 1.0, 1.0, &ScalingSettings::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.measurement("mass_factor").unwrap().value, Some(1.0));
    }

    #[test]
    fn expansion_past_the_grid_is_a_box_error() {
        let psi = ConvexModel::polytrope(1.0, 5.0 / 3.0).unwrap();
        let res = check_scaling(&psi, &gaussian(), 1.0, 0.05, &ScalingSettings::default());
        assert!(matches!(res, Err(Error::BoxSize(_))));
    }
}
