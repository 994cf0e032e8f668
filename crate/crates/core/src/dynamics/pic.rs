use rayon::prelude::*;

use super::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::field::{Field, PlanarField};
use crate::poisson::{force_field, ForceField, PotKernelTable, EDGE_MARGIN};

/// Particles per deposit chunk; partial grids are summed in chunk order so the
/// result does not depend on the thread count.
const DEPOSIT_CHUNK: usize = 1 << 14;

/// Lower-left CIC cell and fractional offsets, if the 2×2 stencil lies on the grid.
pub fn cic_stencil(x: [f64; 2], n: usize, h: f64) -> Option<(usize, usize, f64, f64)> {
    let half = n as f64 / 2.0 - 0.5;
    let gx = x[0] / h + half;
    let gy = x[1] / h + half;
    let (ix, iy) = (gx.floor(), gy.floor());
    if ix < 0.0 || iy < 0.0 || ix + 1.0 > (n - 1) as f64 || iy + 1.0 > (n - 1) as f64 {
        return None;
    }
    Some((ix as usize, iy as usize, gx - ix, gy - iy))
}

/// Cloud-in-cell surface density.
pub fn deposit(ensemble: &ParticleEnsemble, n: usize, h: f64) -> Result<PlanarField> {
    let scale = ensemble.weight / (h * h);
    let partials: Vec<Result<Vec<f64>>> = ensemble
        .pos
        .par_chunks(DEPOSIT_CHUNK)
        .map(|chunk| {
            let mut grid = vec![0.0; n * n];
            for &x in chunk {
                let (ix, iy, fx, fy) = cic_stencil(x, n, h).ok_or_else(|| {
                    Error::BoxSize(format!("particle at ({}, {}) outside the deposit grid", x[0], x[1]))
                })?;
                let k = iy * n + ix;
                grid[k] += (1.0 - fx) * (1.0 - fy);
                grid[k + 1] += fx * (1.0 - fy);
                grid[k + n] += (1.0 - fx) * fy;
                grid[k + n + 1] += fx * fy;
            }
            Ok(grid)
        })
        .collect();
    let mut total = vec![0.0; n * n];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part?) {
            *t += p;
        }
    }
    total.iter_mut().for_each(|v| *v *= scale);
    PlanarField::new(n, h, total)
}

/// CIC interpolation of a grid vector field to particle positions.
pub fn interpolate(force: &ForceField, pos: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let (n, h) = (force.n, force.h);
    pos.par_iter()
        .map(|&x| {
            let (ix, iy, fx, fy) = cic_stencil(x, n, h)
                .ok_or_else(|| Error::BoxSize(format!("particle at ({}, {}) outside the force grid", x[0], x[1])))?;
            let k = iy * n + ix;
            let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
            let idx = [k, k + 1, k + n, k + n + 1];
            let mut a = [0.0, 0.0];
            for (wi, &i) in w.iter().zip(&idx) {
                a[0] += wi * force.fx[i];
                a[1] += wi * force.fy[i];
            }
            Ok(a)
        })
        .collect()
}

/// Removes particles whose stencil comes within [`EDGE_MARGIN`] cells of the
/// box edge; returns how many were dropped.
pub fn drop_escaped(ensemble: &mut ParticleEnsemble, n: usize, h: f64) -> usize {
    let inside = |x: [f64; 2]| match cic_stencil(x, n, h) {
        Some((ix, iy, _, _)) => {
            ix >= EDGE_MARGIN && iy >= EDGE_MARGIN && ix + 1 + EDGE_MARGIN < n && iy + 1 + EDGE_MARGIN < n
        }
        None => false,
    };
    let before = ensemble.len();
    let (pos, vel): (Vec<_>, Vec<_>) = ensemble
        .pos
        .iter()
        .zip(&ensemble.vel)
        .filter(|(x, _)| inside(**x))
        .map(|(x, v)| (*x, *v))
        .unzip();
    ensemble.pos = pos;
    ensemble.vel = vel;
    before - ensemble.len()
}

/// Grid quantities of one field solve.
#[derive(Debug, Clone)]
pub struct PicFields {
    pub rho: PlanarField,
    pub u: PlanarField,
    pub force: ForceField,
}

impl PicFields {
    /// `½ Σ h² ρ U`.
    pub fn potential_energy(&self) -> f64 {
        let h2 = self.rho.h() * self.rho.h();
        0.5 * h2
            * crate::numeric::compensated_sum(
                self.rho.values().iter().zip(self.u.values()).map(|(a, b)| a * b),
            )
    }
}

/// Deposit → free-space potential → `−∇U` → CIC interpolation.
#[derive(Debug, Clone)]
pub struct PicSolver {
    table: PotKernelTable,
}

impl PicSolver {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        Ok(Self {
            table: PotKernelTable::new(n, h)?,
        })
    }

    pub fn table(&self) -> &PotKernelTable {
        &self.table
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn h(&self) -> f64 {
        self.table.h()
    }

    pub fn fields(&self, ensemble: &ParticleEnsemble) -> Result<PicFields> {
        let rho = deposit(ensemble, self.n(), self.h())?;
        // Zero padding is exact for any source inside the box; escapers are
        // dropped before this point.
        let u = self.table.potential_unchecked(&rho)?;
        let force = force_field(&u);
        Ok(PicFields { rho, u, force })
    }

    pub fn accelerations(&self, ensemble: &ParticleEnsemble) -> Result<(Vec<[f64; 2]>, PicFields)> {
        let fields = self.fields(ensemble)?;
        let acc = interpolate(&fields.force, &ensemble.pos)?;
        Ok((acc, fields))
    }
}

/// Kick–drift–kick leapfrog. `acc` holds the accelerations at the current
/// positions on entry and at the new positions on exit; `accel` may drop
/// particles and must return one acceleration per remaining particle.
pub fn leapfrog_step<F>(ensemble: &mut ParticleEnsemble, acc: &mut Vec<[f64; 2]>, dt: f64, mut accel: F) -> Result<()>
where
    F: FnMut(&mut ParticleEnsemble) -> Result<Vec<[f64; 2]>>,
{
    if acc.len() != ensemble.len() {
        return Err(Error::Shape("acceleration count differs from particle count".into()));
    }
    let half = 0.5 * dt;
    for ((x, v), a) in ensemble.pos.iter_mut().zip(ensemble.vel.iter_mut()).zip(acc.iter()) {
        v[0] += half * a[0];
        v[1] += half * a[1];
        x[0] += dt * v[0];
        x[1] += dt * v[1];
    }
    *acc = accel(ensemble)?;
    if acc.len() != ensemble.len() {
        return Err(Error::Shape("acceleration count differs from particle count".into()));
    }
    for (v, a) in ensemble.vel.iter_mut().zip(acc.iter()) {
        v[0] += half * a[0];
        v[1] += half * a[1];
    }
    Ok(())
}
