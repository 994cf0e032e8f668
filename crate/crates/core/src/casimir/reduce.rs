use std::cell::RefCell;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{conjugate_value, ConvexFunction, ConvexModel, LambdaGrid, Table};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, tanh_sinh, GaussLegendre};

/// Grids and tolerance for the reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionGrid {
    pub lambda: LambdaGrid,
    /// Relative accuracy demanded of `Ψ*` and, for polytropes, of the closed form.
    pub tol: f64,
}

impl Default for ReductionGrid {
    fn default() -> Self {
        Self {
            lambda: LambdaGrid::default(),
            tol: 1e-6,
        }
    }
}

/// `Ψ*(λ) = 2π ∫₀^λ Φ*(s) ds`, tabulated cumulatively with exact derivative access.
#[derive(Debug, Clone)]
pub struct ReducedConjugate {
    phi: ConvexModel,
    lambdas: Vec<f64>,
    cumulative: Vec<f64>,
    /// Sum of |GL16 − GL8| panel differences relative to the last value.
    quadrature_error: f64,
}

impl ReducedConjugate {
    pub fn new(phi: &ConvexModel, grid: LambdaGrid) -> Result<Self> {
        phi.validate()?;
        let lambdas = grid.nodes()?;
        let phi_star = |s: f64| conjugate_value(phi, s).map(|(v, _)| 2.0 * PI * v);
        let head = {
            let err = RefCell::new(None);
            let (v, _) = tanh_sinh(0.0, lambdas[0], 1e-13, |s| {
                phi_star(s).unwrap_or_else(|e| {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                })
            });
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            v
        };
        let g16 = GaussLegendre::g16();
        let g8 = GaussLegendre::new(8);
        let panels: Vec<Result<(f64, f64)>> = lambdas
            .par_windows(2)
            .map(|w| {
                let mut fine = 0.0;
                for (x, wt) in g16.mapped(w[0], w[1]) {
                    fine += wt * phi_star(x)?;
                }
                let mut coarse = 0.0;
                for (x, wt) in g8.mapped(w[0], w[1]) {
                    coarse += wt * phi_star(x)?;
                }
                Ok((fine, (fine - coarse).abs()))
            })
            .collect();
        let mut cumulative = Vec::with_capacity(lambdas.len());
        cumulative.push(head);
        let mut running = vec![head];
        let mut err_sum = 0.0;
        for p in panels {
            let (v, e) = p?;
            running.push(v);
            err_sum += e;
            cumulative.push(compensated_sum(running.iter().copied()));
        }
        let last = *cumulative.last().expect("non-empty");
        Ok(Self {
            phi: phi.clone(),
            lambdas,
            cumulative,
            quadrature_error: if last > 0.0 { err_sum / last } else { f64::INFINITY },
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `Ψ*` at the grid nodes.
    pub fn node_values(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn quadrature_error(&self) -> f64 {
        self.quadrature_error
    }
}

impl ConvexFunction for ReducedConjugate {
    fn value(&self, lambda: f64) -> Result<f64> {
        if lambda <= 0.0 {
            return Ok(0.0);
        }
        let n = self.lambdas.len();
        if lambda > self.lambdas[n - 1] {
            return Err(Error::Extrapolation {
                value: lambda,
                min: 0.0,
                max: self.lambdas[n - 1],
            });
        }
        let phi_star = |s: f64| conjugate_value(&self.phi, s).map(|(v, _)| 2.0 * PI * v);
        if lambda < self.lambdas[0] {
            let mut acc = 0.0;
            for (x, w) in GaussLegendre::g16().mapped(0.0, lambda) {
                acc += w * phi_star(x)?;
            }
            return Ok(acc);
        }
        let j = self.lambdas.partition_point(|&x| x <= lambda) - 1;
        let mut acc = 0.0;
        for (x, w) in GaussLegendre::g16().mapped(self.lambdas[j], lambda) {
            acc += w * phi_star(x)?;
        }
        Ok(self.cumulative[j] + acc)
    }

    fn deriv(&self, lambda: f64) -> Result<f64> {
        conjugate_value(&self.phi, lambda).map(|(v, _)| 2.0 * PI * v)
    }

    fn arg_max(&self) -> f64 {
        *self.lambdas.last().expect("non-empty")
    }
}

/// Outcome of [`reduce_detailed`].
#[derive(Debug, Clone)]
pub struct Reduction {
    /// Closed form for polytropes, otherwise the numeric table.
    pub psi: ConvexModel,
    /// The numeric `(Ψ*)*` table, always present.
    pub numeric: ConvexModel,
    pub conjugate: ReducedConjugate,
    /// `n` fitted from the log-log slope `1 + 1/n` of the numeric table.
    pub fitted_n: f64,
    pub quadrature_error: f64,
    /// Max relative deviation of the numeric table from the closed form.
    pub closed_form_error: Option<f64>,
}

/// `Ψ` for `Φ(f) = c f^{1+1/k}`: `C ρ^{1+1/n}` with `n = k + 1`.
pub fn polytrope_psi(coefficient: f64, k: f64) -> Result<ConvexModel> {
    let n = k + 1.0;
    let p = 1.0 + 1.0 / k;
    // Φ*(λ) = A λ^{k+1}
    let a = (p - 1.0) * coefficient * (coefficient * p).powf(-(k + 1.0));
    // Ψ*(λ) = B λ^{n+1}
    let b = 2.0 * PI * a / (n + 1.0);
    let c = n / (n + 1.0) * (b * (n + 1.0)).powf(-1.0 / n);
    ConvexModel::polytrope(c, 1.0 + 1.0 / n)
}

pub fn reduce_phi_to_psi(phi: &ConvexModel, grid: ReductionGrid) -> Result<ConvexModel> {
    reduce_detailed(phi, grid).map(|r| r.psi)
}

/// Computes `Ψ*` from `Φ*` and transforms back to `Ψ = (Ψ*)*` numerically.
pub fn reduce_detailed(phi: &ConvexModel, grid: ReductionGrid) -> Result<Reduction> {
    let conjugate = ReducedConjugate::new(phi, grid.lambda)?;
    if conjugate.quadrature_error > grid.tol {
        return Err(Error::Accuracy {
            target: grid.tol,
            achieved: conjugate.quadrature_error,
            context: format!(
                "λ-grid with {} nodes is too coarse for the Ψ* quadrature",
                grid.lambda.count
            ),
        });
    }
    let rho_nodes: Vec<f64> = conjugate
        .lambdas
        .iter()
        .map(|&l| conjugate.deriv(l))
        .collect::<Result<_>>()?;
    let points: Vec<Result<(f64, f64)>> = rho_nodes
        .par_iter()
        .map(|&rho| conjugate_value(&conjugate, rho))
        .collect();
    let mut args = vec![0.0];
    let mut values = vec![0.0];
    let mut derivs = vec![0.0];
    for (rho, p) in rho_nodes.iter().zip(points) {
        let (v, l) = p?;
        if rho <= args.last().unwrap() {
            continue;
        }
        args.push(*rho);
        values.push(v);
        derivs.push(l);
    }
    let numeric = ConvexModel::Tabulated(Table::with_derivs(args, values, derivs)?);
    numeric.validate()?;
    let fitted_n = fit_index(&numeric);

    let (psi, closed_form_error) = match phi {
        ConvexModel::Polytrope {
            coefficient,
            exponent,
        } => {
            let closed = polytrope_psi(*coefficient, 1.0 / (exponent - 1.0))?;
            let err = max_relative_deviation(&closed, &numeric)?;
            if err > grid.tol {
                return Err(Error::Accuracy {
                    target: grid.tol,
                    achieved: err,
                    context: "numeric Ψ disagrees with the closed-form polytrope".into(),
                });
            }
            (closed, Some(err))
        }
        ConvexModel::Tabulated(_) => (numeric.clone(), None),
    };
    Ok(Reduction {
        psi,
        numeric,
        quadrature_error: conjugate.quadrature_error,
        conjugate,
        fitted_n,
        closed_form_error,
    })
}

fn table_of(model: &ConvexModel) -> &Table {
    match model {
        ConvexModel::Tabulated(t) => t,
        ConvexModel::Polytrope { .. } => unreachable!("numeric reduction is always tabulated"),
    }
}

fn max_relative_deviation(closed: &ConvexModel, numeric: &ConvexModel) -> Result<f64> {
    let t = table_of(numeric);
    let mut worst: f64 = 0.0;
    for (&r, &v) in t.args().iter().zip(t.values()).skip(1) {
        let exact = closed.value(r)?;
        worst = worst.max((v - exact).abs() / exact);
    }
    Ok(worst)
}

/// Least-squares slope of `ln Ψ` against `ln ρ`, returned as `n` with slope `1 + 1/n`.
fn fit_index(numeric: &ConvexModel) -> f64 {
    let t = table_of(numeric);
    let pts: Vec<(f64, f64)> = t
        .args()
        .iter()
        .zip(t.values())
        .skip(1)
        .filter(|(_, v)| **v > 0.0)
        .map(|(a, v)| (a.ln(), v.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    1.0 / (sxy / sxx - 1.0)
}

/// `∫_{ℝ²} Φ*(λ − |v|²/2) dv` by iterated tanh-sinh quadrature over the disk `|v| < √(2λ)`.
pub fn direct_velocity_integral<F>(phi_star: F, lambda: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if lambda <= 0.0 {
        return Ok(0.0);
    }
    let err = RefCell::new(None);
    let eval = |s: f64| {
        phi_star(s.max(0.0)).unwrap_or_else(|e| {
            err.borrow_mut().get_or_insert(e);
            0.0
        })
    };
    let vmax = (2.0 * lambda).sqrt();
    let (quarter, _) = tanh_sinh(0.0, vmax, tol, |vx| {
        let w = (vmax * vmax - vx * vx).max(0.0).sqrt();
        tanh_sinh(0.0, w, tol, |vy| eval(lambda - 0.5 * (vx * vx + vy * vy))).0
    });
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(4.0 * quarter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_phi_gives_known_constant() {
        let phi = ConvexModel::polytrope(1.0, 2.0).unwrap();
        let psi = polytrope_psi(1.0, 1.0).unwrap();
        let expected = 2.0 * 2f64.sqrt() / (3.0 * PI.sqrt());
        match psi {
            ConvexModel::Polytrope {
                coefficient,
                exponent,
            } => {
                assert!((coefficient - expected).abs() < 1e-15);
                assert_eq!(exponent, 1.5);
            }
            _ => unreachable!(),
        }
        let r = reduce_detailed(&phi, ReductionGrid::default()).unwrap();
        assert!(r.closed_form_error.unwrap() < 1e-6);
        assert!((r.fitted_n - 2.0).abs() < 1e-4);
    }

    #[test]
    fn reduced_conjugate_matches_cubic_law() {
        // Φ = f² ⇒ Ψ*(λ) = πλ³/6.
        let phi = ConvexModel::polytrope(1.0, 2.0).unwrap();
        let c = ReducedConjugate::new(&phi, LambdaGrid::default()).unwrap();
        for l in [1e-6, 0.3, 2.0, 50.0] {
            let exact = PI * l * l * l / 6.0;
            assert!((c.value(l).unwrap() - exact).abs() < 1e-10 * exact);
        }
    }

    #[test]
    fn coarse_grid_reports_accuracy() {
        let phi = ConvexModel::polytrope_k(1.0, 0.5).unwrap();
        let grid = ReductionGrid {
            lambda: LambdaGrid {
                min: 1e-8,
                max: 1e4,
                count: 4,
            },
            tol: 1e-6,
        };
        match reduce_detailed(&phi, grid) {
            Err(Error::Accuracy { achieved, .. }) => assert!(achieved > 1e-6),
            other => panic!("expected accuracy error, got {other:?}"),
        }
    }

    #[test]
    fn direct_quadrature_of_quadratic_conjugate() {
        let phi_star = |l: f64| Ok(l * l / 4.0);
        let v = direct_velocity_integral(phi_star, 1.7, 1e-12).unwrap();
        let exact = PI * 1.7f64.powi(3) / 6.0;
        assert!((v - exact).abs() < 1e-9 * exact);
    }
}
