use serde::{Deserialize, Serialize};

use super::{ConvexFunction, ConvexModel};
use crate::error::{Error, Result};
use crate::numeric::geometric_grid;

/// Geometric λ-grid specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: 1e-8,
            max: 1e4,
            count: 2048,
        }
    }
}

impl LambdaGrid {
    pub fn scaled(scale: f64) -> Self {
        let d = Self::default();
        Self {
            min: d.min * scale,
            max: d.max * scale,
            count: d.count,
        }
    }

    pub fn nodes(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max > self.min && self.count >= 2) {
            return Err(Error::Config(format!(
                "invalid λ-grid [{}, {}] with {} nodes",
                self.min, self.max, self.count
            )));
        }
        Ok(geometric_grid(self.min, self.max, self.count))
    }
}

/// Tabulated Legendre transform of a convex model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateModel {
    pub base: ConvexModel,
    pub grid: LambdaGrid,
    lambdas: Vec<f64>,
    values: Vec<f64>,
    /// Maximiser `r(λ)`, which is also the derivative of the conjugate.
    argmax: Vec<f64>,
}

impl ConjugateModel {
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn argmax(&self) -> &[f64] {
        &self.argmax
    }

    /// Conjugate value at `λ`: 0 for `λ ≤ 0`, Hermite interpolation on the
    /// table, direct evaluation below the first node.
    pub fn value(&self, lambda: f64) -> Result<f64> {
        if lambda <= 0.0 {
            return Ok(0.0);
        }
        let n = self.lambdas.len();
        if lambda < self.lambdas[0] {
            return conjugate_value(&self.base, lambda).map(|(v, _)| v);
        }
        if lambda > self.lambdas[n - 1] {
            return Err(Error::Extrapolation {
                value: lambda,
                min: self.lambdas[0],
                max: self.lambdas[n - 1],
            });
        }
        let i = self.lambdas.partition_point(|&x| x <= lambda).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.lambdas[i], self.lambdas[i + 1]);
        let h = x1 - x0;
        let t = (lambda - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * self.values[i]
            + (t3 - 2.0 * t2 + t) * h * self.argmax[i]
            + (-2.0 * t3 + 3.0 * t2) * self.values[i + 1]
            + (t3 - t2) * h * self.argmax[i + 1])
    }
}

/// `sup_r (λ r − f(r))` together with the maximiser, by bisection on `f'(r) = λ`.
pub fn conjugate_value<F: ConvexFunction>(f: &F, lambda: f64) -> Result<(f64, f64)> {
    if lambda.is_nan() {
        return Err(Error::Domain("λ is NaN".into()));
    }
    if lambda <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let cap = f.arg_max();
    let mut hi = 1.0f64.min(cap);
    while f.deriv(hi)? < lambda {
        if hi >= cap {
            return Err(Error::Extrapolation {
                value: lambda,
                min: 0.0,
                max: f.deriv(cap)?,
            });
        }
        hi = (hi * 2.0).min(cap);
    }
    let mut lo = 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-13 * hi {
            break;
        }
        if f.deriv(mid)? < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    let v = lambda * r - f.value(r)?;
    let slope = f.deriv(r)?;
    if (slope - lambda).abs() <= 1e-6 * lambda {
        return Ok((v, r));
    }
    // Root-find stalled on a kink or flat piece: fall back to a coarse scan.
    let upper = (4.0 * hi).min(cap);
    let scan = geometric_grid(upper * 1e-12, upper, 4096);
    let mut best = (v, r);
    for x in scan {
        let cand = lambda * x - f.value(x)?;
        if cand > best.0 {
            best = (cand, x);
        }
    }
    Ok(best)
}

/// Numeric Legendre transform of `model` on the given λ-grid.
pub fn legendre_numeric(model: &ConvexModel, grid: LambdaGrid) -> Result<ConjugateModel> {
    model.validate()?;
    let lambdas = grid.nodes()?;
    let mut values = Vec::with_capacity(lambdas.len());
    let mut argmax = Vec::with_capacity(lambdas.len());
    for &l in &lambdas {
        let (v, r) = conjugate_value(model, l)?;
        values.push(v);
        argmax.push(r);
    }
    if values.windows(2).any(|w| w[1] < w[0]) || argmax.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Model(
            "conjugate is not nondecreasing and convex on the λ-grid".into(),
        ));
    }
    Ok(ConjugateModel {
        base: model.clone(),
        grid,
        lambdas,
        values,
        argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_conjugate() {
        let m = ConvexModel::polytrope(1.0, 2.0).unwrap();
        let (v, r) = conjugate_value(&m, 2.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(conjugate_value(&m, -1.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn cubic_conjugate_spot_value() {
        let m = ConvexModel::polytrope(1.0, 3.0).unwrap();
        let (v, _) = conjugate_value(&m, 3.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn table_matches_closed_form() {
        let m = ConvexModel::polytrope_k(1.0, 0.9).unwrap();
        let grid = LambdaGrid {
            min: 1e-4,
            max: 10.0,
            count: 1000,
        };
        let c = legendre_numeric(&m, grid).unwrap();
        let p: f64 = 1.0 + 1.0 / 0.9;
        let exact = |l: f64| (p - 1.0) * (l / p).powf(p / (p - 1.0));
        for l in [1e-4, 3e-3, 0.5, 2.7, 10.0] {
            let rel = (c.value(l).unwrap() - exact(l)).abs() / exact(l);
            assert!(rel < 1e-6, "λ={l} rel={rel}");
        }
        assert_eq!(c.value(-3.0).unwrap(), 0.0);
    }

    #[test]
    fn nonconvex_table_rejected() {
        let args: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut values: Vec<f64> = args.iter().map(|a| a * a).collect();
        values[5] = 40.0;
        let m = ConvexModel::tabulated(args, values).unwrap();
        assert!(matches!(
            legendre_numeric(&m, LambdaGrid::default()),
            Err(Error::Model(_))
        ));
    }
}
