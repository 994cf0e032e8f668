use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, PlanarField};

/// Analytic test densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Profile {
    Gaussian { mass: f64, width: f64, center: [f64; 2] },
    /// Uniform disk.
    Disk { mass: f64, radius: f64, center: [f64; 2] },
}

impl Profile {
    /// Value at distance `r` from the centre.
    pub fn radial(&self, r: f64) -> f64 {
        match *self {
            Self::Gaussian { mass, width, .. } => {
                mass / (2.0 * PI * width * width) * (-0.5 * r * r / (width * width)).exp()
            }
            Self::Disk { mass, radius, .. } => {
                if r <= radius {
                    mass / (PI * radius * radius)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let c = self.center();
        self.radial((x - c[0]).hypot(y - c[1]))
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            Self::Gaussian { center, .. } | Self::Disk { center, .. } => center,
        }
    }

    pub fn mass(&self) -> f64 {
        match *self {
            Self::Gaussian { mass, .. } | Self::Disk { mass, .. } => mass,
        }
    }

    /// Radius containing all but a `1e−12` fraction of the peak value.
    pub fn extent(&self) -> f64 {
        match *self {
            Self::Gaussian { width, .. } => width * (24.0 * 10f64.ln()).sqrt(),
            Self::Disk { radius, .. } => radius,
        }
    }
}

/// Randomised mixtures of 1 to `max_components` Gaussians and disks with
/// centres inside the central half of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub count: usize,
    pub mass: f64,
    /// Cells per side of the base grid; the refinement check doubles it.
    pub n: usize,
    pub box_size: f64,
    pub max_components: usize,
    pub seed: u64,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            count: 100,
            mass: 1.0,
            n: 128,
            box_size: 16.0,
            max_components: 4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFamily {
    pub spec: FamilySpec,
    pub members: Vec<Vec<Profile>>,
}

impl DensityFamily {
    pub fn generate(spec: FamilySpec) -> Result<Self> {
        if spec.count == 0 || spec.max_components == 0 {
            return Err(Error::Config("family needs at least one member and one component".into()));
        }
        if !(spec.mass > 0.0 && spec.box_size > 0.0) || !spec.n.is_power_of_two() || spec.n < 32 {
            return Err(Error::Config(
                "family needs positive mass and box size and a power-of-two grid of at least 32 cells".into(),
            ));
        }
        let l = spec.box_size;
        let h = l / spec.n as f64;
        let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut members = Vec::with_capacity(spec.count);
        for _ in 0..spec.count {
            let k = rng.random_range(1..=spec.max_components);
            let weights: Vec<f64> = (0..k).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            let mut parts = Vec::with_capacity(k);
            for w in weights {
                let center = [l * (rng.random::<f64>() - 0.5) / 2.0, l * (rng.random::<f64>() - 0.5) / 2.0];
                let mass = spec.mass * w / total;
                if rng.random::<bool>() {
                    parts.push(Profile::Gaussian {
                        mass,
                        width: log_uniform(&mut rng, 1.5 * h, l / 36.0),
                        center,
                    });
                } else {
                    parts.push(Profile::Disk {
                        mass,
                        radius: log_uniform(&mut rng, 2.0 * h, l / 5.0),
                        center,
                    });
                }
            }
            members.push(parts);
        }
        Ok(Self { spec, members })
    }

    /// Member `i` sampled at cell centres on an `n × n` grid over the box and
    /// rescaled to the family mass.
    pub fn sample(&self, i: usize, n: usize) -> Result<PlanarField> {
        sample_mixture(&self.members[i], n, self.spec.box_size, self.spec.mass)
    }
}

/// Samples a mixture on a grid over a box of side `box_size` and rescales it
/// to `mass`; values below `1e−12` of the peak are cut to zero.
pub fn sample_mixture(parts: &[Profile], n: usize, box_size: f64, mass: f64) -> Result<PlanarField> {
    let h = box_size / n as f64;
    let rho = PlanarField::from_fn(n, h, |x, y| parts.iter().map(|p| p.value(x, y)).sum())?;
    let peak = rho.values().iter().copied().fold(0.0, f64::max);
    let rho = rho.map(|v| if v > 1e-12 * peak { v } else { 0.0 });
    let m = rho.mass();
    if !(m > 0.0) {
        return Err(Error::Domain("mixture has no mass on the grid".into()));
    }
    Ok(rho.map(|v| v * mass / m))
}
