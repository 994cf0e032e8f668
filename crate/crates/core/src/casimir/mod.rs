//! Convex Casimir models, Legendre transforms and the reduction `Φ → Ψ`.

mod legendre;
mod reduce;

pub use legendre::{conjugate_value, legendre_numeric, ConjugateModel, LambdaGrid};
pub use reduce::{
    direct_velocity_integral, polytrope_psi, reduce_phi_to_psi, reduce_detailed, ReducedConjugate, Reduction,
    ReductionGrid,
};

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;

/// Anything that behaves like a convex function on `[0, ∞)` with derivative access.
pub trait ConvexFunction {
    fn value(&self, r: f64) -> Result<f64>;
    fn deriv(&self, r: f64) -> Result<f64>;
    /// Largest admissible argument (`∞` when unbounded).
    fn arg_max(&self) -> f64;
}

/// Which quantity [`ConvexModel::eval`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Value,
    Deriv,
    InvDeriv,
}

/// A convex function with `value(0) = deriv(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConvexModel {
    /// `coefficient · r^exponent`, `exponent > 1`.
    Polytrope { coefficient: f64, exponent: f64 },
    Tabulated(Table),
}

/// Sampled convex function: Hermite-cubic in value, linear in derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    args: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl Table {
    /// Builds a table from samples; node derivatives come from monotone
    /// (Fritsch–Carlson) slopes with a zero slope at the origin.
    pub fn from_samples(args: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_samples(&args, &values)?;
        let derivs = pchip_slopes(&args, &values);
        Ok(Self {
            args,
            values,
            derivs,
        })
    }

    /// Builds a table from samples with known node derivatives.
    pub fn with_derivs(args: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>) -> Result<Self> {
        check_samples(&args, &values)?;
        if derivs.len() != args.len() || derivs.iter().any(|d| !d.is_finite()) {
            return Err(Error::Model("derivative column malformed".into()));
        }
        Ok(Self {
            args,
            values,
            derivs,
        })
    }

    pub fn args(&self) -> &[f64] {
        &self.args
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }

    fn segment(&self, r: f64) -> Result<usize> {
        let max = *self.args.last().expect("non-empty");
        if r > max || r < self.args[0] {
            return Err(Error::Extrapolation {
                value: r,
                min: self.args[0],
                max,
            });
        }
        Ok(self
            .args
            .partition_point(|&a| a <= r)
            .clamp(1, self.args.len() - 1)
            - 1)
    }

    fn value(&self, r: f64) -> Result<f64> {
        let i = self.segment(r)?;
        let (x0, x1) = (self.args[i], self.args[i + 1]);
        let h = x1 - x0;
        let t = (r - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * self.values[i]
            + h10 * h * self.derivs[i]
            + h01 * self.values[i + 1]
            + h11 * h * self.derivs[i + 1])
    }

    fn deriv(&self, r: f64) -> Result<f64> {
        let i = self.segment(r)?;
        let t = (r - self.args[i]) / (self.args[i + 1] - self.args[i]);
        Ok(self.derivs[i] * (1.0 - t) + self.derivs[i + 1] * t)
    }

    fn inv_deriv(&self, s: f64) -> Result<f64> {
        let d = &self.derivs;
        let max = *d.last().expect("non-empty");
        if s > max || s < d[0] {
            return Err(Error::Extrapolation {
                value: s,
                min: d[0],
                max,
            });
        }
        let i = d.partition_point(|&x| x <= s).clamp(1, d.len() - 1) - 1;
        let span = d[i + 1] - d[i];
        if span <= 0.0 {
            return Err(Error::Model("derivative column is not increasing".into()));
        }
        let t = (s - d[i]) / span;
        Ok(self.args[i] * (1.0 - t) + self.args[i + 1] * t)
    }
}

fn check_samples(args: &[f64], values: &[f64]) -> Result<()> {
    if args.len() < 3 || args.len() != values.len() {
        return Err(Error::Model(format!(
            "table needs at least 3 matching rows (got {} args, {} values)",
            args.len(),
            values.len()
        )));
    }
    if args[0] != 0.0 {
        return Err(Error::Model("table must start at argument 0".into()));
    }
    if args.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Model("table arguments must be strictly increasing".into()));
    }
    if args.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::Model("table contains non-finite entries".into()));
    }
    Ok(())
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        if a * b > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    let (h0, h1) = (h[n - 2], h[n - 3]);
    let end = ((2.0 * h0 + h1) * delta[n - 2] - h0 * delta[n - 3]) / (h0 + h1);
    d[n - 1] = if end * delta[n - 2] <= 0.0 {
        0.0
    } else if delta[n - 2] * delta[n - 3] < 0.0 && end.abs() > 3.0 * delta[n - 2].abs() {
        3.0 * delta[n - 2]
    } else {
        end
    };
    d
}

impl ConvexModel {
    /// `Φ(f) = c f^{1+1/k}`.
    pub fn polytrope_k(coefficient: f64, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Model(format!("polytropic index k must be positive, got {k}")));
        }
        Self::polytrope(coefficient, 1.0 + 1.0 / k)
    }

    pub fn polytrope(coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::Model(format!(
                "coefficient must be positive, got {coefficient}"
            )));
        }
        if !(exponent > 1.0 && exponent.is_finite()) {
            return Err(Error::Model(format!("exponent must exceed 1, got {exponent}")));
        }
        Ok(Self::Polytrope {
            coefficient,
            exponent,
        })
    }

    pub fn tabulated(args: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Ok(Self::Tabulated(Table::from_samples(args, values)?))
    }

    /// Growth index `k` with `exponent = 1 + 1/k` (polytropes only).
    /// Power `p` of a polytrope `c·r^p`.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            Self::Polytrope { exponent, .. } => Some(*exponent),
            Self::Tabulated(_) => None,
        }
    }

    pub fn index(&self) -> Option<f64> {
        match self {
            Self::Polytrope { exponent, .. } => Some(1.0 / (exponent - 1.0)),
            Self::Tabulated(_) => None,
        }
    }

    pub fn eval(&self, r: f64, which: Which) -> Result<f64> {
        match which {
            Which::Value => self.value(r),
            Which::Deriv => self.deriv(r),
            Which::InvDeriv => self.inv_deriv(r),
        }
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        check_arg(r)?;
        match self {
            Self::Polytrope {
                coefficient,
                exponent,
            } => Ok(coefficient * r.powf(*exponent)),
            Self::Tabulated(t) => t.value(r),
        }
    }

    pub fn deriv(&self, r: f64) -> Result<f64> {
        check_arg(r)?;
        match self {
            Self::Polytrope {
                coefficient,
                exponent,
            } => Ok(coefficient * exponent * r.powf(exponent - 1.0)),
            Self::Tabulated(t) => t.deriv(r),
        }
    }

    pub fn inv_deriv(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        match self {
            Self::Polytrope {
                coefficient,
                exponent,
            } => Ok((s / (coefficient * exponent)).powf(1.0 / (exponent - 1.0))),
            Self::Tabulated(t) => t.inv_deriv(s),
        }
    }

    /// Checks `value(0) = 0`, strict convexity and superlinearity on the
    /// sampled range (tables) or the parameters (polytropes).
    pub fn validate(&self) -> Result<()> {
        let t = match self {
            Self::Polytrope {
                coefficient,
                exponent,
            } => {
                return Self::polytrope(*coefficient, *exponent).map(|_| ());
            }
            Self::Tabulated(t) => t,
        };
        if t.values[0] != 0.0 {
            return Err(Error::Model(format!(
                "value at 0 must be 0, got {}",
                t.values[0]
            )));
        }
        for (i, w) in t.args.windows(3).enumerate() {
            let s1 = (t.values[i + 1] - t.values[i]) / (w[1] - w[0]);
            let s2 = (t.values[i + 2] - t.values[i + 1]) / (w[2] - w[1]);
            if s2 <= s1 {
                return Err(Error::Model(format!(
                    "chord inequality fails near argument {}",
                    w[1]
                )));
            }
        }
        for i in 1..t.args.len() - 1 {
            if t.values[i + 1] / t.args[i + 1] <= t.values[i] / t.args[i] {
                return Err(Error::Model(format!(
                    "value(r)/r is not increasing near {}",
                    t.args[i]
                )));
            }
        }
        if t.derivs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Model("node derivatives are not increasing".into()));
        }
        Ok(())
    }

    /// `p(ρ) = ρ Ψ'(ρ) − Ψ(ρ)`.
    pub fn pressure(&self, rho: f64) -> Result<f64> {
        if rho == 0.0 {
            return Ok(0.0);
        }
        Ok(rho * self.deriv(rho)? - self.value(rho)?)
    }

    /// Reads the `# convex-model v1` two-column CSV format.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty model file".into()))??;
        if header.trim() != MODEL_CSV_HEADER {
            return Err(Error::Format(format!(
                "expected header `{MODEL_CSV_HEADER}`, found `{}`",
                header.trim()
            )));
        }
        let mut args = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.parse().ok()).ok_or_else(|| {
                    Error::Format(format!("line {}: expected `argument,value`", lineno + 2))
                })
            };
            args.push(parse(parts.next())?);
            values.push(parse(parts.next())?);
            if parts.next().is_some() {
                return Err(Error::Format(format!(
                    "line {}: too many columns",
                    lineno + 2
                )));
            }
        }
        Self::tabulated(args, values)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// Writes the model as a table; polytropes are sampled on `args`.
    pub fn write_csv<W: Write>(&self, mut out: W, args: &[f64]) -> Result<()> {
        writeln!(out, "{MODEL_CSV_HEADER}")?;
        match self {
            Self::Tabulated(t) => {
                for (a, v) in t.args.iter().zip(&t.values) {
                    writeln!(out, "{a:e},{v:e}")?;
                }
            }
            Self::Polytrope { .. } => {
                for &a in args {
                    writeln!(out, "{a:e},{:e}", self.value(a)?)?;
                }
            }
        }
        Ok(())
    }
}

pub const MODEL_CSV_HEADER: &str = "# convex-model v1";

fn check_arg(r: f64) -> Result<()> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::Domain(format!("argument must be nonnegative, got {r}")));
    }
    Ok(())
}

impl ConvexFunction for ConvexModel {
    fn value(&self, r: f64) -> Result<f64> {
        ConvexModel::value(self, r)
    }

    fn deriv(&self, r: f64) -> Result<f64> {
        ConvexModel::deriv(self, r)
    }

    fn arg_max(&self) -> f64 {
        match self {
            Self::Polytrope { .. } => f64::INFINITY,
            Self::Tabulated(t) => *t.args.last().expect("non-empty"),
        }
    }
}

/// `∫ [Ψ(ρ) − Ψ(ρ₀) + (U₀ − E₀)(ρ − ρ₀)] dx` on a shared grid.
pub fn d_reduced<F: Field>(psi: &ConvexModel, rho: &F, rho0: &F, u0: &F, e0: f64) -> Result<f64> {
    rho.check_same_grid(rho0)?;
    rho.check_same_grid(u0)?;
    let mut terms = Vec::with_capacity(rho.len());
    for i in 0..rho.len() {
        let (r, r0, u) = (rho.values()[i], rho0.values()[i], u0.values()[i]);
        if r < 0.0 {
            return Err(Error::Domain(format!("negative density {r} at node {i}")));
        }
        let local = if r == r0 {
            0.0
        } else {
            psi.value(r)? - psi.value(r0)? + (u - e0) * (r - r0)
        };
        terms.push(rho.weight(i) * local);
    }
    Ok(crate::numeric::compensated_sum(terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{PlanarField, RadialField};

    #[test]
    fn quadratic_value_deriv_inverse() {
        let m = ConvexModel::polytrope(1.0, 2.0).unwrap();
        assert_eq!(m.eval(3.0, Which::Value).unwrap(), 9.0);
        assert_eq!(m.eval(3.0, Which::Deriv).unwrap(), 6.0);
        assert!((m.eval(6.0, Which::InvDeriv).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn cubic_inverse_derivative() {
        let m = ConvexModel::polytrope_k(1.0, 0.5).unwrap();
        assert!((m.inv_deriv(12.0).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn negative_argument_is_domain_error() {
        let m = ConvexModel::polytrope(1.0, 2.0).unwrap();
        assert!(matches!(m.value(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn table_extrapolation_is_error() {
        let args: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let values = args.iter().map(|a| a * a).collect();
        let m = ConvexModel::tabulated(args, values).unwrap();
        assert!(matches!(m.value(5.0), Err(Error::Extrapolation { .. })));
        assert!((m.value(1.05).unwrap() - 1.1025).abs() < 1e-3);
    }

    #[test]
    fn table_inverse_derivative_roundtrip() {
        let args: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
        let values = args.iter().map(|a| a.powf(2.5)).collect();
        let m = ConvexModel::tabulated(args, values).unwrap();
        m.validate().unwrap();
        for r in [0.1, 0.77, 1.3, 2.2] {
            let s = m.deriv(r).unwrap();
            assert!((m.inv_deriv(s).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_table_fails_validation() {
        let args: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = ConvexModel::tabulated(args, vec![0.0; 10]).unwrap();
        assert!(matches!(m.validate(), Err(Error::Model(_))));
    }

    #[test]
    fn pressure_examples() {
        let sq = ConvexModel::polytrope(1.0, 2.0).unwrap();
        assert_eq!(sq.pressure(2.0).unwrap(), 4.0);
        assert_eq!(sq.pressure(0.0).unwrap(), 0.0);
        let n2 = ConvexModel::polytrope(1.0, 1.5).unwrap();
        assert!((n2.pressure(4.0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrip() {
        let args: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
        let values: Vec<f64> = args.iter().map(|a| a.powi(3)).collect();
        let m = ConvexModel::tabulated(args, values).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, &[]).unwrap();
        let back = ConvexModel::read_csv(buf.as_slice()).unwrap();
        assert_eq!(m, back);
        assert!(ConvexModel::read_csv("nope\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn d_reduced_vanishes_at_reference_and_penalises_outside_support() {
        let psi = ConvexModel::polytrope(1.0, 2.0).unwrap();
        let nodes = RadialField::geometric_nodes(1e-2, 4.0, 64);
        let rho0 = RadialField::from_fn(nodes.clone(), |r| (1.0 - r * r).max(0.0)).unwrap();
        let u0 = RadialField::from_fn(nodes.clone(), |r| -2.0 + r * r).unwrap();
        let e0 = -1.0;
        assert_eq!(d_reduced(&psi, &rho0, &rho0, &u0, e0).unwrap(), 0.0);
        let outside = rho0.map(|v| v).with_values(
            nodes
                .iter()
                .zip(rho0.values())
                .map(|(&r, &v)| if (2.0..3.0).contains(&r) { 0.01 } else { v })
                .collect(),
        );
        assert!(d_reduced(&psi, &outside.unwrap(), &rho0, &u0, e0).unwrap() > 0.0);
    }

    #[test]
    fn d_reduced_rejects_mismatched_grids() {
        let psi = ConvexModel::polytrope(1.0, 2.0).unwrap();
        let a = PlanarField::zeros(8, 1.0).unwrap();
        let b = PlanarField::zeros(8, 0.5).unwrap();
        assert!(matches!(
            d_reduced(&psi, &a, &b, &a, -1.0),
            Err(Error::Shape(_))
        ));
    }
}
