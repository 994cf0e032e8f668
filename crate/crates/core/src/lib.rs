//! Steady states of razor-thin self-gravitating disks: convex Casimir models,
//! flat Poisson solvers, a reduced variational solver, a particle-in-cell
//! stability harness and a battery of numerical checks.

pub mod casimir;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod numeric;
pub mod poisson;
pub mod steady;
pub mod verify;

pub use casimir::{ConjugateModel, ConvexModel};
pub use error::{Error, Result};
pub use field::{Field, PlanarField, RadialField};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
