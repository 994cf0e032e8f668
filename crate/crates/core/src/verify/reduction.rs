use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CheckReport;
use crate::casimir::{
    conjugate_value, direct_velocity_integral, polytrope_psi, reduce_detailed, ConvexFunction, ConvexModel,
    ReductionGrid,
};
use crate::numeric::geometric_grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionSettings {
    pub grid: ReductionGrid,
    /// λ-range on which the identities are sampled.
    pub lambda_range: (f64, f64),
    pub samples: usize,
    /// Bound on `|n − (k + 1)|` for polytropes.
    pub index_tol: f64,
    /// Tolerance of the direct 2D quadrature.
    pub quadrature_tol: f64,
}

impl Default for ReductionSettings {
    fn default() -> Self {
        Self {
            grid: ReductionGrid::default(),
            lambda_range: (1e-4, 10.0),
            samples: 7,
            index_tol: 1e-4,
            quadrature_tol: 1e-10,
        }
    }
}

/// Largest drop between consecutive chord slopes (or node derivatives),
/// relative to the largest slope; 0 for a convex table and for polytropes.
pub fn convexity_defect(model: &ConvexModel) -> f64 {
    let ConvexModel::Tabulated(t) = model else {
        return if model.validate().is_ok() { 0.0 } else { f64::INFINITY };
    };
    let (a, v) = (t.args(), t.values());
    let slopes: Vec<f64> = (0..a.len() - 1).map(|i| (v[i + 1] - v[i]) / (a[i + 1] - a[i])).collect();
    let scale = slopes
        .iter()
        .chain(t.derivs())
        .fold(0.0f64, |m, s| m.max(s.abs()))
        .max(f64::MIN_POSITIVE);
    let drop = |w: &[f64]| (w[0] - w[1]).max(0.0);
    let worst = slopes
        .windows(2)
        .map(drop)
        .chain(t.derivs().windows(2).map(drop))
        .fold(0.0, f64::max);
    worst / scale
}

/// Reduction `Φ → Ψ`: the velocity-integral identity against direct 2D
/// quadrature, the Legendre roundtrip, the polytropic index map and
/// `Ψ(0) = Ψ'(0) = 0` with convexity. Never returns an error; failures are
/// recorded in the report.
pub fn check_reduction(phi: &ConvexModel, settings: &ReductionSettings) -> CheckReport {
    let tol = settings.grid.tol;
    let mut report = CheckReport::new(
        &format!("reduction/{}", model_label(phi)),
        "Ψ*(λ) = ∫Φ*(λ − |v|²/2) dv = 2π∫₀^λ Φ*; Ψ = (Ψ*)*; Φ ~ f^{1+1/k} ⇒ Ψ ~ ρ^{1+1/(k+1)}; Ψ(0) = Ψ'(0) = 0, Ψ convex",
        &(phi, settings),
        tol,
    );
    if !report.at_most("phi_convexity_defect", convexity_defect(phi), 1e-12) {
        report.note("input model is not convex; remaining checks skipped");
        return report;
    }
    if let Err(e) = phi.validate() {
        report.fail(&e);
        return report;
    }
    let red = match reduce_detailed(phi, settings.grid) {
        Ok(r) => r,
        Err(e) => {
            report.fail(&e);
            return report;
        }
    };
    report.info("quadrature_error_estimate", red.quadrature_error);

    let (lo, hi) = settings.lambda_range;
    let lambdas = geometric_grid(lo, hi, settings.samples.max(2));
    let closed = phi.exponent().map(|p| polytrope_psi(phi_coefficient(phi), 1.0 / (p - 1.0)));
    let step = |l: f64| -> crate::Result<(f64, f64, Option<f64>)> {
        let tabulated = red.conjugate.value(l)?;
        let direct = direct_velocity_integral(|s| conjugate_value(phi, s).map(|p| p.0), l, settings.quadrature_tol)?;
        let rho = red.conjugate.deriv(l)?;
        let fenchel = l * rho - tabulated;
        let psi = red.numeric.value(rho)?;
        let c = match &closed {
            Some(Ok(m)) => Some(((psi - m.value(rho)?) / m.value(rho)?).abs()),
            _ => None,
        };
        Ok(((tabulated - direct).abs() / direct, (psi - fenchel).abs() / fenchel.abs(), c))
    };
    let rows: crate::Result<Vec<_>> = lambdas.par_iter().map(|&l| step(l)).collect();
    let rows = match rows {
        Ok(r) => r,
        Err(e) => {
            report.fail(&e);
            return report;
        }
    };
    let identity = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let roundtrip = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let closed_err = rows.iter().filter_map(|r| r.2).fold(0.0, f64::max);
    report.at_most("reduction_identity", identity, tol);
    report.at_most("legendre_roundtrip", roundtrip, tol);
    match (closed, phi.index()) {
        (Some(Ok(m)), Some(k)) => {
            report.at_most("closed_form", closed_err, tol);
            if let ConvexModel::Polytrope {
                coefficient,
                exponent,
            } = m
            {
                report.info("psi_coefficient", coefficient);
                report.info("psi_exponent", exponent);
            }
            report.info("fitted_n", red.fitted_n);
            report.at_most("index_map", (red.fitted_n - (k + 1.0)).abs(), settings.index_tol);
        }
        (Some(Err(e)), _) => report.fail(&e),
        _ => {
            report.info("fitted_n", red.fitted_n);
            report.note("tabulated Φ: no closed-form index to compare against");
        }
    }
    let origin = red.numeric.value(0.0).and_then(|v| Ok(v.abs() + red.numeric.deriv(0.0)?.abs()));
    match origin {
        Ok(v) => {
            report.at_most("psi_at_origin", v, 0.0);
        }
        Err(e) => report.fail(&e),
    }
    report.at_most("psi_convexity_defect", convexity_defect(&red.numeric), 1e-12);
    report
}

fn phi_coefficient(phi: &ConvexModel) -> f64 {
    match phi {
        ConvexModel::Polytrope { coefficient, .. } => *coefficient,
        ConvexModel::Tabulated(_) => f64::NAN,
    }
}

pub(super) fn model_label(model: &ConvexModel) -> String {
    match model {
        ConvexModel::Polytrope {
            coefficient,
            exponent,
        } => format!("polytrope(c={coefficient},p={exponent})"),
        ConvexModel::Tabulated(t) => format!("table({} nodes)", t.args().len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casimir::Table;

    #[test]
    fn convex_table_has_no_defect() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = a.iter().map(|x| x * x).collect();
        let m = ConvexModel::tabulated(a, v).unwrap();
        assert_eq!(convexity_defect(&m), 0.0);
    }

    #[test]
    fn dented_table_is_flagged() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let mut v: Vec<f64> = a.iter().map(|x| x * x).collect();
        v[20] += 0.5;
        let m = ConvexModel::Tabulated(Table::from_samples(a, v).unwrap());
        assert!(convexity_defect(&m) > 0.01);
        let r = check_reduction(&m, &ReductionSettings::default());
        assert!(!r.pass);
        assert_eq!(r.failures(), vec!["phi_convexity_defect"]);
    }
}
