use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::steady::LiftedState;

/// Equal-weight particles `(x, v)` in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub pos: Vec<[f64; 2]>,
    pub vel: Vec<[f64; 2]>,
    pub weight: f64,
    pub seed: u64,
}

impl ParticleEnsemble {
    pub fn new(pos: Vec<[f64; 2]>, vel: Vec<[f64; 2]>, weight: f64, seed: u64) -> Result<Self> {
        if pos.is_empty() || pos.len() != vel.len() {
            return Err(Error::Shape(format!(
                "{} positions and {} velocities",
                pos.len(),
                vel.len()
            )));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Domain(format!("particle weight {weight}")));
        }
        if pos.iter().chain(&vel).any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::Domain("non-finite particle coordinate".into()));
        }
        Ok(Self {
            pos,
            vel,
            weight,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weight * self.len() as f64
    }

    pub fn momentum(&self) -> [f64; 2] {
        let (mut px, mut py) = (0.0, 0.0);
        for v in &self.vel {
            px += v[0];
            py += v[1];
        }
        [self.weight * px, self.weight * py]
    }

    pub fn center_of_mass(&self) -> [f64; 2] {
        let (mut cx, mut cy) = (0.0, 0.0);
        for x in &self.pos {
            cx += x[0];
            cy += x[1];
        }
        let n = self.len() as f64;
        [cx / n, cy / n]
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.weight * self.vel.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>()
    }

    /// `√(⟨|v|²⟩)`.
    pub fn v_rms(&self) -> f64 {
        (2.0 * self.kinetic_energy() / self.mass()).sqrt()
    }
}

/// Rejection sampling of `f₀` against `f_max` on the box
/// `{|x| ≤ R} × {|v| ≤ √(2(E₀ − min U₀))}`. Accepted points are stored in
/// antithetic pairs `(x, v)`, `(−x, −v)`, so momentum and centre of mass vanish
/// to rounding.
pub fn sample_steady(lifted: &LiftedState, np: usize, seed: u64) -> Result<ParticleEnsemble> {
    if np == 0 {
        return Err(Error::Config("Np must be at least 1".into()));
    }
    if !(lifted.mass > 0.0 && lifted.f_max > 0.0) {
        return Err(Error::Config("lifted state carries no mass".into()));
    }
    let radius = position_bound(lifted);
    let umin = lifted.u0.values().iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = (2.0 * (lifted.e0 - umin)).max(0.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Vec::with_capacity(np);
    let mut vel = Vec::with_capacity(np);
    let mut trials: u64 = 0;
    let mut accepted: u64 = 0;
    while pos.len() < np {
        trials += 1;
        let x = uniform_disk(&mut rng, radius);
        let v = uniform_disk(&mut rng, vmax);
        let f = lifted.f0(x, v)?;
        if rng.random::<f64>() * lifted.f_max < f {
            accepted += 1;
            pos.push(x);
            vel.push(v);
            if pos.len() < np {
                pos.push([-x[0], -x[1]]);
                vel.push([-v[0], -v[1]]);
            }
        }
        if trials >= 100_000 && (accepted as f64) < 1e-4 * trials as f64 {
            return Err(Error::Envelope {
                rate: accepted as f64 / trials as f64,
            });
        }
    }
    log::debug!("sampled {np} particles, acceptance {:.4}", accepted as f64 / trials as f64);
    ParticleEnsemble::new(pos, vel, lifted.mass / np as f64, seed)
}

/// First grid radius where `U₀ ≥ E₀`, beyond which `f₀` vanishes.
fn position_bound(lifted: &LiftedState) -> f64 {
    let nodes = lifted.u0.nodes();
    lifted
        .u0
        .values()
        .iter()
        .position(|&u| u >= lifted.e0)
        .map(|i| nodes[i])
        .unwrap_or_else(|| lifted.u0.outer_radius())
}

fn uniform_disk<R: Rng>(rng: &mut R, radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let th = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    [r * th.cos(), r * th.sin()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    None,
    /// Add `V` to every velocity.
    Boost { velocity: [f64; 2] },
    /// `x → λx`.
    PositionScale { factor: f64 },
    /// iid Gaussian velocity kicks of dispersion `ε·v_rms` per component.
    VelocityNoise { relative: f64 },
}

impl Perturbation {
    /// `‖f_perturbed‖_p / ‖f₀‖_p` where known in closed form.
    pub fn norm_ratio(&self, p: f64) -> Option<f64> {
        match *self {
            Self::None | Self::Boost { .. } => Some(1.0),
            // f ↦ λ⁻² f(x/λ, v).
            Self::PositionScale { factor } => Some(factor.powf(2.0 / p - 2.0)),
            Self::VelocityNoise { .. } => None,
        }
    }
}

pub fn perturb(ensemble: &ParticleEnsemble, perturbation: &Perturbation, seed: u64) -> Result<ParticleEnsemble> {
    let mut out = ensemble.clone();
    match *perturbation {
        Perturbation::None => {}
        Perturbation::Boost { velocity } => {
            for v in &mut out.vel {
                v[0] += velocity[0];
                v[1] += velocity[1];
            }
        }
        Perturbation::PositionScale { factor } => {
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(Error::Config(format!("position scale {factor}")));
            }
            for x in &mut out.pos {
                x[0] *= factor;
                x[1] *= factor;
            }
        }
        Perturbation::VelocityNoise { relative } => {
            if !(relative >= 0.0 && relative.is_finite()) {
                return Err(Error::Config(format!("velocity noise {relative}")));
            }
            let sigma = relative * ensemble.v_rms();
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for v in &mut out.vel {
                    v[0] += normal.sample(&mut rng);
                    v[1] += normal.sample(&mut rng);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ParticleEnsemble {
        ParticleEnsemble::new(vec![[1.0, 0.0], [-1.0, 0.0]], vec![[0.0, 1.0], [0.0, -1.0]], 0.5, 0).unwrap()
    }

    #[test]
    fn boost_adds_momentum() {
        let e = tiny();
        let b = perturb(&e, &Perturbation::Boost { velocity: [0.05, 0.0] }, 0).unwrap();
        let p = b.momentum();
        assert!((p[0] - 0.05 * e.mass()).abs() < 1e-15);
        assert_eq!(b.pos, e.pos);
    }

    #[test]
    fn unit_scale_is_identity() {
        let e = tiny();
        assert_eq!(perturb(&e, &Perturbation::PositionScale { factor: 1.0 }, 0).unwrap(), e);
    }

    #[test]
    fn noise_is_seeded() {
        let e = tiny();
        let p = Perturbation::VelocityNoise { relative: 0.1 };
        assert_eq!(perturb(&e, &p, 3).unwrap(), perturb(&e, &p, 3).unwrap());
        assert_ne!(perturb(&e, &p, 3).unwrap(), perturb(&e, &p, 4).unwrap());
    }

    #[test]
    fn rejects_bad_ensembles() {
        assert!(ParticleEnsemble::new(vec![], vec![], 1.0, 0).is_err());
        assert!(ParticleEnsemble::new(vec![[0.0, 0.0]], vec![[f64::NAN, 0.0]], 1.0, 0).is_err());
        assert!(ParticleEnsemble::new(vec![[0.0, 0.0]], vec![[0.0, 0.0]], 0.0, 0).is_err());
    }
}
