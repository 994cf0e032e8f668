//! Free-space potential on an origin-centred Cartesian grid by zero-padded FFT convolution.

use std::sync::Arc;

use realfft::num_complex::Complex64;

use super::fft::Fft2;
use crate::error::{Error, Result};
use crate::field::{Field, PlanarField};
use crate::numeric::compensated_sum;

/// Cells within this many spacings of the origin use the exact cell integral.
const EXACT_CELLS: i64 = 64;

/// Minimum number of empty cells between the support and the box edge.
pub const EDGE_MARGIN: usize = 2;

/// Discrete `1/|x|` kernel on the `(2N)²` padded grid and its spectrum.
#[derive(Debug, Clone)]
pub struct PotKernelTable {
    n: usize,
    h: f64,
    fft: Arc<Fft2>,
    spectrum: Vec<Complex64>,
    self_cell: f64,
}

/// `∬ 1/|x| dx dy` over `[0,x]×[0,y]`, extended oddly in each argument.
fn corner(x: f64, y: f64) -> f64 {
    let mut v = 0.0;
    if x != 0.0 {
        v += x * (y / x.abs()).asinh();
    }
    if y != 0.0 {
        v += y * (x / y.abs()).asinh();
    }
    v
}

/// Exact integral of `1/|x|` over the cell of side `h` centred at `(cx, cy)`.
pub fn cell_integral(cx: f64, cy: f64, h: f64) -> f64 {
    let (x1, x2) = (cx - 0.5 * h, cx + 0.5 * h);
    let (y1, y2) = (cy - 0.5 * h, cy + 0.5 * h);
    corner(x2, y2) - corner(x1, y2) - corner(x2, y1) + corner(x1, y1)
}

/// Cell integral of `1/|x|` at integer offset `(i, j)`, far cells by expansion.
fn cell_kernel(i: i64, j: i64, h: f64) -> f64 {
    if i.abs().max(j.abs()) <= EXACT_CELLS {
        return cell_integral(i as f64 * h, j as f64 * h, h);
    }
    let r2 = ((i * i + j * j) as f64) * h * h;
    let r = r2.sqrt();
    // Mean of 1/|x| over a square: 1/r + (h²/24)Δ(1/r) + O(h⁴/r⁵), Δ(1/r) = 1/r³ in 2D.
    h * h * (1.0 / r + h * h / (24.0 * r * r2))
}

impl PotKernelTable {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        PlanarField::zeros(n, h)?;
        let m = 2 * n;
        let fft = Arc::new(Fft2::new(m));
        let mut data = vec![0.0; m * m];
        let n_i = n as i64;
        for iy in 0..m {
            let dy = if iy < n { iy as i64 } else { iy as i64 - m as i64 };
            for ix in 0..m {
                let dx = if ix < n { ix as i64 } else { ix as i64 - m as i64 };
                if dx == -n_i || dy == -n_i {
                    continue;
                }
                let k = cell_kernel(dx, dy, h);
                let lap = cell_kernel(dx + 1, dy, h)
                    + cell_kernel(dx - 1, dy, h)
                    + cell_kernel(dx, dy + 1, h)
                    + cell_kernel(dx, dy - 1, h)
                    - 4.0 * k;
                // Removes the leading error of sampling ρ at cell centres.
                data[iy * m + ix] = k - lap / 24.0;
            }
        }
        let self_cell = data[0];
        let spectrum = fft.forward(&mut data);
        Ok(Self {
            n,
            h,
            fft,
            spectrum,
            self_cell,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Corrected kernel weight at the zero offset.
    pub fn self_cell(&self) -> f64 {
        self.self_cell
    }

    fn check(&self, f: &PlanarField) -> Result<()> {
        if f.n() != self.n || f.h() != self.h {
            return Err(Error::Shape(format!(
                "kernel built for ({}, {}) but field is ({}, {})",
                self.n,
                self.h,
                f.n(),
                f.h()
            )));
        }
        Ok(())
    }

    fn padded_spectrum(&self, f: &PlanarField) -> Vec<Complex64> {
        let n = self.n;
        let m = 2 * n;
        let mut data = vec![0.0; m * m];
        for iy in 0..n {
            data[iy * m..iy * m + n].copy_from_slice(&f.values()[iy * n..(iy + 1) * n]);
        }
        self.fft.forward(&mut data)
    }

    fn crop(&self, padded: &[f64], scale: f64) -> Vec<f64> {
        let n = self.n;
        let m = 2 * n;
        let mut out = Vec::with_capacity(n * n);
        for iy in 0..n {
            out.extend(padded[iy * m..iy * m + n].iter().map(|v| v * scale));
        }
        out
    }

    /// `U = −Σ K ρ` without the box check.
    pub fn potential_unchecked(&self, rho: &PlanarField) -> Result<PlanarField> {
        self.check(rho)?;
        let mut spec = self.padded_spectrum(rho);
        for (s, k) in spec.iter_mut().zip(&self.spectrum) {
            *s *= k;
        }
        let out = self.fft.inverse(spec);
        rho.with_values(self.crop(&out, -1.0))
    }

    /// Potential after checking that the support keeps [`EDGE_MARGIN`] empty cells.
    pub fn potential(&self, rho: &PlanarField) -> Result<PlanarField> {
        check_box(rho)?;
        self.potential_unchecked(rho)
    }

    /// `C(a) = Σ_x ρ(x) (K * ρ₀)(x − a)` for every cyclic cell shift `a`
    /// on the padded grid, row-major `(2N)²`.
    pub fn shift_correlation(&self, rho: &PlanarField, rho0: &PlanarField) -> Result<Vec<f64>> {
        self.check(rho)?;
        self.check(rho0)?;
        let a = self.padded_spectrum(rho);
        let b = self.padded_spectrum(rho0);
        let spec = a
            .iter()
            .zip(&b)
            .zip(&self.spectrum)
            .map(|((x, y), k)| x * y.conj() * k)
            .collect();
        Ok(self.fft.inverse(spec))
    }

    /// `T_a ρ` for a real shift `a` (in length units) by spectral phase shift on
    /// the padded grid, cropped back to `N × N`.
    pub fn translate(&self, rho: &PlanarField, a: [f64; 2]) -> Result<PlanarField> {
        self.check(rho)?;
        let m = 2 * self.n;
        let mut spec = self.padded_spectrum(rho);
        let (sx, sy) = (a[0] / self.h, a[1] / self.h);
        let two_pi = 2.0 * std::f64::consts::PI;
        for kx in 0..m / 2 + 1 {
            for ky in 0..m {
                let (fx, fy) = self.fft.wavenumbers(kx, ky);
                let mut phase = -two_pi * (fx * sx + fy * sy) / m as f64;
                // The Nyquist bins are self-conjugate; a real shift there is ill-defined.
                if kx == m / 2 || ky == m / 2 {
                    phase = 0.0;
                }
                spec[kx * m + ky] *= Complex64::from_polar(1.0, phase);
            }
        }
        let out = self.fft.inverse(spec);
        rho.with_values(self.crop(&out, 1.0))
    }
}

/// Rejects densities whose support reaches within [`EDGE_MARGIN`] cells of the edge.
pub fn check_box(rho: &PlanarField) -> Result<()> {
    let n = rho.n();
    let peak = rho.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(());
    }
    let thr = 1e-12 * peak;
    for iy in 0..n {
        for ix in 0..n {
            if rho.get(ix, iy).abs() > thr {
                let m = ix.min(iy).min(n - 1 - ix).min(n - 1 - iy);
                if m < EDGE_MARGIN {
                    return Err(Error::BoxSize(format!(
                        "support reaches cell ({ix}, {iy}); keep at least {EDGE_MARGIN} empty cells \
                         to the edge of the {n}×{n} box"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `U_ρ` on the same grid with free-space boundary conditions.
pub fn potential_fft(rho: &PlanarField) -> Result<PlanarField> {
    PotKernelTable::new(rho.n(), rho.h())?.potential(rho)
}

/// Outcome of [`best_shift_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftFit {
    pub shift: [f64; 2],
    pub distance: f64,
    /// Pot-distance without any shift.
    pub raw_distance: f64,
}

/// Minimises `‖ρ − T_a ρ₀‖_pot` over shifts `a`.
pub fn best_shift_distance(rho: &PlanarField, rho0: &PlanarField) -> Result<ShiftFit> {
    let table = PotKernelTable::new(rho.n(), rho.h())?;
    best_shift_with(&table, rho, rho0)
}

pub fn best_shift_with(
    table: &PotKernelTable,
    rho: &PlanarField,
    rho0: &PlanarField,
) -> Result<ShiftFit> {
    rho.check_same_grid(rho0)?;
    let n = table.n();
    let m = 2 * n;
    let h = table.h();
    let corr = table.shift_correlation(rho, rho0)?;
    let limit = (n / 2) as i64;
    let at = |dx: i64, dy: i64| corr[(dy.rem_euclid(m as i64) as usize) * m + dx.rem_euclid(m as i64) as usize];
    let mut best = (0i64, 0i64);
    let mut best_val = f64::NEG_INFINITY;
    for dy in -limit..=limit {
        for dx in -limit..=limit {
            let v = at(dx, dy);
            if v > best_val {
                best_val = v;
                best = (dx, dy);
            }
        }
    }
    let (bx, by) = best;
    let vertex = |l: f64, c: f64, r: f64| {
        let den = l - 2.0 * c + r;
        if den < 0.0 {
            (0.5 * (l - r) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let fx = vertex(at(bx - 1, by), at(bx, by), at(bx + 1, by));
    let fy = vertex(at(bx, by - 1), at(bx, by), at(bx, by + 1));

    let distance_for = |shift: [f64; 2], integer: Option<(i64, i64)>| -> Result<f64> {
        let moved = match integer {
            Some((dx, dy)) => rho0.shifted_cells(dx, dy),
            None => table.translate(rho0, shift)?,
        };
        let diff = rho.zip_map(&moved, |a, b| a - b)?;
        pot_norm_with(table, &diff)
    };
    let raw = distance_for([0.0, 0.0], Some((0, 0)))?;
    let mut result = ShiftFit {
        shift: [0.0, 0.0],
        distance: raw,
        raw_distance: raw,
    };
    let int_shift = [bx as f64 * h, by as f64 * h];
    if best != (0, 0) {
        let d = distance_for(int_shift, Some(best))?;
        if d < result.distance {
            result.distance = d;
            result.shift = int_shift;
        }
    }
    if fx != 0.0 || fy != 0.0 {
        let shift = [(bx as f64 + fx) * h, (by as f64 + fy) * h];
        let d = distance_for(shift, None)?;
        if d < result.distance {
            result.distance = d;
            result.shift = shift;
        }
    }
    Ok(result)
}

/// `½ ∬ ρ σ / |x − y|` using a prebuilt kernel.
pub fn pot_inner_with(table: &PotKernelTable, rho: &PlanarField, sigma: &PlanarField) -> Result<f64> {
    rho.check_same_grid(sigma)?;
    let u = table.potential_unchecked(sigma)?;
    let h2 = rho.h() * rho.h();
    Ok(-0.5 * h2 * compensated_sum(rho.values().iter().zip(u.values()).map(|(a, b)| a * b)))
}

pub fn pot_norm_with(table: &PotKernelTable, rho: &PlanarField) -> Result<f64> {
    Ok(pot_inner_with(table, rho, rho)?.max(0.0).sqrt())
}

/// `−∇U` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    pub n: usize,
    pub h: f64,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
}

impl ForceField {
    /// Discrete curl `∂x Fy − ∂y Fx` with the same difference stencils.
    pub fn curl(&self) -> Vec<f64> {
        let dyx = diff_x(&self.fy, self.n, self.h);
        let dxy = diff_y(&self.fx, self.n, self.h);
        dyx.iter().zip(&dxy).map(|(a, b)| a - b).collect()
    }
}

/// Fourth-order central differences in the interior, second-order one-sided at the edges.
fn diff_x(u: &[f64], n: usize, h: f64) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for iy in 0..n {
        let row = &u[iy * n..(iy + 1) * n];
        let out = &mut d[iy * n..(iy + 1) * n];
        stencil(row, out, h);
    }
    d
}

fn diff_y(u: &[f64], n: usize, h: f64) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    let mut out = vec![0.0; n];
    for ix in 0..n {
        for iy in 0..n {
            col[iy] = u[iy * n + ix];
        }
        stencil(&col, &mut out, h);
        for iy in 0..n {
            d[iy * n + ix] = out[iy];
        }
    }
    d
}

fn stencil(u: &[f64], out: &mut [f64], h: f64) {
    let n = u.len();
    for i in 2..n - 2 {
        out[i] = (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) / (12.0 * h);
    }
    out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    out[1] = (u[2] - u[0]) / (2.0 * h);
    out[n - 2] = (u[n - 1] - u[n - 3]) / (2.0 * h);
    out[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
}

/// `−∇U` by fourth-order central differences.
pub fn force_field(u: &PlanarField) -> ForceField {
    let (n, h) = (u.n(), u.h());
    let gx = diff_x(u.values(), n, h);
    let gy = diff_y(u.values(), n, h);
    ForceField {
        n,
        h,
        fx: gx.into_iter().map(|v| -v).collect(),
        fy: gy.into_iter().map(|v| -v).collect(),
    }
}
