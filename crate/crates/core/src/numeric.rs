//! Quadrature rules, complete elliptic integrals and small root-finding helpers.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Complete elliptic integral of the first kind, parameter convention `m = k²`.
///
/// Arithmetic-geometric mean: `K(m) = π / (2 AGM(1, √(1-m)))`.
pub fn ellipk(m: f64) -> f64 {
    if m.is_nan() || m < 0.0 {
        return f64::NAN;
    }
    if m >= 1.0 {
        return f64::INFINITY;
    }
    ellipk_complement((1.0 - m).sqrt())
}

/// `K` as a function of the complementary modulus `k' = √(1-m)`.
///
/// Accurate near the logarithmic singularity where forming `1 - m` would cancel.
pub fn ellipk_complement(kp: f64) -> f64 {
    if kp.is_nan() || kp < 0.0 {
        return f64::NAN;
    }
    if kp == 0.0 {
        return f64::INFINITY;
    }
    let mut a = 1.0;
    let mut b = kp;
    for _ in 0..40 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    PI / (a + b)
}

/// Complete elliptic integral of the second kind, `m = k²`.
pub fn ellipe(m: f64) -> f64 {
    if m.is_nan() || m < 0.0 {
        return f64::NAN;
    }
    if m >= 1.0 {
        return 1.0;
    }
    let mut a = 1.0;
    let mut b = (1.0 - m).sqrt();
    let mut c2_sum = 0.5 * m;
    let mut pow2 = 0.5;
    for _ in 0..40 {
        let c = 0.5 * (a - b);
        if c.abs() <= 1e-16 * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
        pow2 *= 2.0;
        c2_sum += pow2 * c * c;
    }
    PI / (2.0 * a) * (1.0 - c2_sum)
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Newton on P_n starting from the Chebyshev-like guess.
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 64-point rule.
    pub fn g64() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(64))
    }

    /// Shared 16-point rule.
    pub fn g16() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(16))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }

    /// Abscissae mapped to `[a, b]` with their scaled weights.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

/// Double-exponential (tanh-sinh) quadrature on a finite interval.
///
/// The integrand receives the abscissa; endpoint singularities of algebraic
/// or logarithmic type are handled without special treatment. Returns the
/// estimate and the difference between the last two refinement levels.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, mut f: F) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let t_max = 3.2;
    let mut h = 0.5;
    let node = |t: f64| -> (f64, f64) {
        let s = 0.5 * PI * t.sinh();
        let u = 1.0 / s.cosh();
        let x = s.tanh();
        let w = 0.5 * PI * t.cosh() * u * u;
        (x, w)
    };
    let eval = |t: f64, f: &mut F| -> f64 {
        let (x, w) = node(t);
        if w < 1e-300 {
            return 0.0;
        }
        // Guard against abscissae rounding onto the endpoints.
        let xa = mid + half * x;
        let xb = mid - half * x;
        let mut s = 0.0;
        if xa > a.min(b) && xa < a.max(b) {
            s += w * f(xa);
        }
        if t != 0.0 && xb > a.min(b) && xb < a.max(b) {
            s += w * f(xb);
        }
        s
    };
    let mut sum = eval(0.0, &mut f);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        sum += eval(k as f64 * h, &mut f);
        k += 1;
    }
    let mut estimate = sum * h * half;
    let mut err = f64::INFINITY;
    for _level in 0..10 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            sum += eval(k as f64 * h, &mut f);
            k += 2;
        }
        let next = sum * h * half;
        err = (next - estimate).abs();
        estimate = next;
        if err <= tol * estimate.abs().max(1e-300) {
            break;
        }
    }
    (estimate, err)
}

/// Bisection for an increasing function on `[lo, hi]` with `f(lo) <= target <= f(hi)`.
///
/// Stops when the bracket is narrower than `rel_tol * |hi|` (or stagnates).
pub fn bisect_increasing<F: FnMut(f64) -> f64>(
    mut lo: f64,
    mut hi: f64,
    target: f64,
    rel_tol: f64,
    mut f: F,
) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= rel_tol * hi.abs().max(lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `count` geometrically spaced points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                lo * (ratio * i as f64).exp()
            }
        })
        .collect()
}

/// Neumaier-compensated summation in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipk_reference_values() {
        assert!((ellipk(0.0) - PI / 2.0).abs() < 1e-15);
        // K(1/2) = Γ(1/4)² / (4√π)
        let k_half = 1.854_074_677_301_372;
        assert!((ellipk(0.5) - k_half).abs() < 1e-14);
        assert!(ellipk(1.0).is_infinite());
    }

    #[test]
    fn ellipe_reference_values() {
        assert!((ellipe(0.0) - PI / 2.0).abs() < 1e-15);
        assert!((ellipe(0.5) - 1.350_643_881_047_675_5).abs() < 1e-14);
        assert_eq!(ellipe(1.0), 1.0);
    }

    #[test]
    fn ellipk_log_asymptote() {
        // 1 - 2^-40 is exact in binary, so m1 carries no rounding error.
        let m1: f64 = 2f64.powi(-40);
        let approx = 0.5 * (16.0 / m1).ln();
        assert!((ellipk(1.0 - m1) - approx).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_polynomials_exact() {
        let g = GaussLegendre::new(8);
        let v = g.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let s: f64 = g.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_endpoint_singularities() {
        let (v, _) = tanh_sinh(0.0, 1.0, 1e-13, |x| x.sqrt());
        assert!((v - 2.0 / 3.0).abs() < 1e-13);
        let (v, _) = tanh_sinh(0.0, 1.0, 1e-13, |x| x.ln());
        assert!((v + 1.0).abs() < 1e-12);
        let (v, _) = tanh_sinh(-1.0, 1.0, 1e-13, |x| (1.0 - x * x).powf(1.5));
        assert!((v - 3.0 * PI / 8.0).abs() < 1e-13);
    }

    #[test]
    fn bisection_finds_root() {
        let r = bisect_increasing(0.0, 10.0, 2.0, 1e-14, |x| x * x);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }
}
