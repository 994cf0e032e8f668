//! Potentials of planar densities under the three-dimensional `1/|x|` kernel.

mod fft;
mod io;
mod planar;
mod radial;

pub use fft::Fft2;
pub use io::{read_fgrid, write_fgrid, FGRID_MAGIC};
pub use planar::{
    best_shift_distance, best_shift_with, cell_integral, check_box, force_field, pot_inner_with,
    pot_norm_with, potential_fft, ForceField, PotKernelTable, ShiftFit, EDGE_MARGIN,
};
pub use radial::{far_field_ratio, potential_at, potential_radial, RadialPotential};

use crate::error::Result;
use crate::field::{Field, PlanarField, RadialField};
use crate::numeric::compensated_sum;

/// Fields whose potential can be computed on their own grid.
pub trait Potential: Field + Sized {
    fn potential(&self) -> Result<Self>;
}

impl Potential for RadialField {
    fn potential(&self) -> Result<Self> {
        potential_radial(self, self.nodes())
    }
}

impl Potential for PlanarField {
    fn potential(&self) -> Result<Self> {
        potential_fft(self)
    }
}

/// `½ ∫ U_ρ ρ` given a precomputed potential on the same grid.
pub fn e_pot_from<F: Field>(rho: &F, u: &F) -> Result<f64> {
    rho.check_same_grid(u)?;
    Ok(0.5
        * compensated_sum(
            (0..rho.len()).map(|i| rho.weight(i) * rho.values()[i] * u.values()[i]),
        ))
}

/// `E_pot(ρ) = ½ ∫ U_ρ ρ = −⟨ρ, ρ⟩_pot`.
pub fn e_pot<F: Potential>(rho: &F) -> Result<f64> {
    e_pot_from(rho, &rho.potential()?)
}

/// `⟨ρ, σ⟩_pot = ½ ∬ ρ(x) σ(y) / |x − y|`.
pub fn pot_inner<F: Potential>(rho: &F, sigma: &F) -> Result<f64> {
    rho.check_same_grid(sigma)?;
    Ok(-e_pot_from(rho, &sigma.potential()?)?)
}

/// `‖ρ‖_pot = (−E_pot(ρ))^{1/2}`.
pub fn pot_norm<F: Potential>(rho: &F) -> Result<f64> {
    Ok((-e_pot(rho)?).max(0.0).sqrt())
}
