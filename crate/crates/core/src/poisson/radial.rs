//! Ring-kernel potential of axisymmetric surface densities.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Field, RadialField};
use crate::numeric::{compensated_sum, ellipk_complement, GaussLegendre};

/// Linear map from nodal densities to potential values at fixed radii.
///
/// Row `i` holds `−4 ∫ φ_j(s) s/(r_i+s) K(4 r_i s/(r_i+s)²) ds` for the hat
/// basis `φ_j` of the source grid.
#[derive(Debug, Clone)]
pub struct RadialPotential {
    nodes: Vec<f64>,
    eval_radii: Vec<f64>,
    matrix: Vec<f64>,
}

impl RadialPotential {
    pub fn new(nodes: &[f64], eval_radii: &[f64]) -> Result<Self> {
        if eval_radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Domain("evaluation radii must be finite and nonnegative".into()));
        }
        let j = nodes.len();
        let rows: Vec<Vec<f64>> = eval_radii.par_iter().map(|&r| row(nodes, r)).collect();
        let mut matrix = Vec::with_capacity(eval_radii.len() * j);
        for r in rows {
            matrix.extend(r);
        }
        Ok(Self {
            nodes: nodes.to_vec(),
            eval_radii: eval_radii.to_vec(),
            matrix,
        })
    }

    /// Operator evaluating on the source nodes themselves.
    pub fn on_nodes(nodes: &[f64]) -> Result<Self> {
        Self::new(nodes, nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Self-adjoint part `½(A + W⁻¹AᵀW)` of a square operator with respect to
    /// the quadrature weights `W`. Its quadratic form equals that of `A`, and
    /// it is the exact gradient of the discrete `E_pot = ½ Σ wᵢ ρᵢ (Aρ)ᵢ`.
    pub fn symmetrized(&self, weights: &[f64]) -> Result<Self> {
        let j = self.nodes.len();
        if self.eval_radii != self.nodes || weights.len() != j {
            return Err(Error::Shape("symmetrisation needs a square operator and one weight per node".into()));
        }
        let mut matrix = vec![0.0; j * j];
        for i in 0..j {
            for k in 0..j {
                matrix[i * j + k] =
                    0.5 * (self.matrix[i * j + k] + self.matrix[k * j + i] * weights[k] / weights[i]);
            }
        }
        Ok(Self {
            nodes: self.nodes.clone(),
            eval_radii: self.eval_radii.clone(),
            matrix,
        })
    }

    pub fn eval_radii(&self) -> &[f64] {
        &self.eval_radii
    }

    pub fn apply_values(&self, rho: &[f64]) -> Vec<f64> {
        let j = self.nodes.len();
        self.matrix
            .chunks_exact(j)
            .map(|row| compensated_sum(row.iter().zip(rho).map(|(w, v)| w * v)))
            .collect()
    }

    pub fn apply(&self, rho: &RadialField) -> Result<RadialField> {
        if rho.nodes() != self.nodes.as_slice() {
            return Err(Error::Shape("density grid differs from operator grid".into()));
        }
        RadialField::new(self.eval_radii.clone(), self.apply_values(rho.values()))
    }
}

/// `U_ρ` at `eval_radii` for an axisymmetric density.
pub fn potential_radial(rho: &RadialField, eval_radii: &[f64]) -> Result<RadialField> {
    RadialPotential::new(rho.nodes(), eval_radii)?.apply(rho)
}

/// `U_ρ(r)` at a single radius.
pub fn potential_at(rho: &RadialField, r: f64) -> Result<f64> {
    let op = RadialPotential::new(rho.nodes(), &[r])?;
    Ok(op.apply_values(rho.values())[0])
}

fn row(nodes: &[f64], r: f64) -> Vec<f64> {
    let j = nodes.len();
    let mut out = vec![0.0; j];
    // Inner disk: constant basis function φ₀ on [0, r₀].
    accumulate_panel(r, 0.0, nodes[0], |_| 1.0, |w| out[0] += w);
    for k in 0..j - 1 {
        let (a, b) = (nodes[k], nodes[k + 1]);
        let width = b - a;
        let down = move |s: f64| (b - s) / width;
        let up = move |s: f64| (s - a) / width;
        accumulate_panel(r, a, b, down, |w| out[k] += w);
        accumulate_panel(r, a, b, up, |w| out[k + 1] += w);
    }
    out
}

/// Adds `−4 ∫_a^b φ(s) s/(r+s) K(m) ds` through `sink`.
fn accumulate_panel<P: Fn(f64) -> f64, S: FnMut(f64)>(r: f64, a: f64, b: f64, phi: P, mut sink: S) {
    let width = b - a;
    let dist = if r < a {
        a - r
    } else if r > b {
        r - b
    } else {
        0.0
    };
    if r == 0.0 {
        // K(0) = π/2 and s/(r+s) = 1.
        let v = GaussLegendre::g16().integrate(a, b, &phi);
        sink(-4.0 * std::f64::consts::FRAC_PI_2 * v);
        return;
    }
    if dist > 2.0 * width {
        let g = GaussLegendre::g16();
        let v = g.integrate(a, b, |s| phi(s) * s / (r + s) * ring_k(r, s));
        sink(-4.0 * v);
        return;
    }
    // Near panel: K = R + ln((r+s)/|r−s|) with R bounded; the ln|r−s| part is
    // split into a smooth remainder and an analytic integral.
    let g = |s: f64| phi(s) * s / (r + s);
    let g_r = g(r);
    let smooth = |s: f64| {
        let d = (r - s).abs();
        let k = ring_k(r, s);
        let reg = if d > 0.0 { k + d.ln() } else { (8.0 * r).ln() };
        // reg = K + ln|r−s| = R + ln(r+s), finite at s = r.
        g(s) * reg - (g(s) - g_r) * d.max(f64::MIN_POSITIVE).ln()
    };
    let rule = GaussLegendre::g64();
    let v = if r > a && r < b {
        rule.integrate(a, r, smooth) + rule.integrate(r, b, smooth)
    } else {
        rule.integrate(a, b, smooth)
    };
    let log_part = g_r * (log_antiderivative(b - r) - log_antiderivative(a - r));
    sink(-4.0 * (v - log_part));
}

/// `K(4rs/(r+s)²)` via the complementary modulus `|r−s|/(r+s)`.
fn ring_k(r: f64, s: f64) -> f64 {
    ellipk_complement((r - s).abs() / (r + s))
}

/// `∫ ln|x| dx = x ln|x| − x`.
fn log_antiderivative(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.abs().ln() - x
    }
}

/// Far-field check: `U(r)·r / (−M)` at `r`.
pub fn far_field_ratio(rho: &RadialField, r: f64) -> Result<f64> {
    let u = potential_at(rho, r)?;
    Ok(u * r / -rho.mass())
}
