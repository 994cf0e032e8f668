//! Fixtures shared by the benchmarks.

use flatgrav_core::casimir::{reduce_detailed, ReductionGrid};
use flatgrav_core::dynamics::{sample_steady, ParticleEnsemble};
use flatgrav_core::steady::{lift, solve_reduced, LiftedState, SteadyProblem, SteadyStateSolution};
use flatgrav_core::ConvexModel;

/// `Φ(f) = f^{1+1/k}` with `k = 1/2`.
pub fn phi() -> ConvexModel {
    ConvexModel::polytrope_k(1.0, 0.5).expect("valid polytrope")
}

/// Steady state at unit mass and its lift.
pub fn steady() -> (SteadyStateSolution, LiftedState) {
    let psi = reduce_detailed(&phi(), ReductionGrid::default()).expect("reduction").psi;
    let solution = solve_reduced(&SteadyProblem::new(psi, 1.0)).expect("solve");
    let lifted = lift(&solution, &phi()).expect("lift");
    (solution, lifted)
}

pub fn ensemble(lifted: &LiftedState, np: usize) -> ParticleEnsemble {
    sample_steady(lifted, np, 1).expect("sampling")
}

/// Grid spacing the simulation driver uses for `n` cells and the default box.
pub fn pic_spacing(solution: &SteadyStateSolution, n: usize) -> f64 {
    10.0 * solution.support_radius / n as f64
}
