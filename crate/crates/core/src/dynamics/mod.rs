//! Particle-in-cell evolution of the flat Vlasov–Poisson system, used to probe
//! the stability of lifted steady states.

mod io;
mod pic;
mod run;
mod sample;

pub use io::{read_fpart, write_fpart, FPART_MAGIC};
pub use pic::{cic_stencil, deposit, drop_escaped, interpolate, leapfrog_step, PicFields, PicSolver};
pub use run::{
    run, run_ensemble, DiagnosticsRow, DiagnosticsSeries, GridReference, RunOutput, SimConfig,
    DIAGNOSTICS_HEADER, MAX_DT,
};
pub use sample::{perturb, sample_steady, ParticleEnsemble, Perturbation};
