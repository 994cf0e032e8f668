use std::io::Write;

use serde::{Deserialize, Serialize};

use super::pic::{drop_escaped, leapfrog_step, PicFields, PicSolver};
use super::{perturb, sample_steady, ParticleEnsemble, Perturbation};
use crate::casimir::{d_reduced, ConvexModel};
use crate::error::{Error, Result};
use crate::field::{PlanarField, RadialField};
use crate::poisson::best_shift_with;
use crate::steady::{dynamical_time, LiftedState, SteadyStateSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Time step in units of `T_dyn`.
    pub dt: f64,
    /// Run length in units of `T_dyn`.
    pub t_end: f64,
    pub n: usize,
    /// Box side as a multiple of the support radius of `ρ₀`.
    pub box_factor: f64,
    /// Diagnostic cadence in units of `T_dyn`.
    pub diag_every: f64,
    /// Snapshot cadence in units of `T_dyn`; `None` disables snapshots.
    pub snapshot_every: Option<f64>,
    pub np: usize,
    pub seed: u64,
    /// Relative total-energy drift beyond which the run is flagged.
    pub drift_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 10.0,
            n: 256,
            box_factor: 10.0,
            diag_every: 0.5,
            snapshot_every: None,
            np: 200_000,
            seed: 1,
            drift_tolerance: 1e-3,
        }
    }
}

/// Largest admissible step in units of `T_dyn`.
pub const MAX_DT: f64 = 0.02;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::Config(format!("dt = {} must lie in (0, {MAX_DT}] T_dyn", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config("t_end must be positive".into()));
        }
        if !self.n.is_power_of_two() || self.n < 16 {
            return Err(Error::Config(format!("grid N = {} must be a power of two ≥ 16", self.n)));
        }
        if !(self.box_factor > 2.0) {
            return Err(Error::Config("box_factor must exceed 2 (box must contain the support)".into()));
        }
        if !(self.diag_every >= self.dt) {
            return Err(Error::Config("diag_every must be at least dt".into()));
        }
        if let Some(s) = self.snapshot_every {
            if !(s >= self.dt) {
                return Err(Error::Config("snapshot_every must be at least dt".into()));
            }
        }
        if self.np == 0 {
            return Err(Error::Config("np must be positive".into()));
        }
        Ok(())
    }

    fn steps(&self, interval: f64) -> usize {
        ((interval / self.dt).round() as usize).max(1)
    }
}

/// One diagnostic output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub t_dyn_units: f64,
    pub n_particles: usize,
    pub mass: f64,
    pub e_kin: f64,
    pub e_pot: f64,
    pub e_total: f64,
    pub momentum: [f64; 2],
    pub center_of_mass: [f64; 2],
    /// `‖ρ(t) − ρ₀‖_pot`.
    pub raw_distance: f64,
    /// `min_a ‖ρ(t) − T_a ρ₀‖_pot`.
    pub shift_distance: f64,
    pub shift: [f64; 2],
    /// `d(ρ(t), T_a ρ₀)` at the minimising shift.
    pub d_reduced: f64,
    /// `shift_distance + d_reduced`.
    pub stability: f64,
    /// `‖f(0)‖_{1+1/k} / ‖f₀‖_{1+1/k}` when known, otherwise NaN.
    pub norm_ratio: f64,
}

pub const DIAGNOSTICS_HEADER: &str = "t,t_over_tdyn,n_particles,mass,e_kin,e_pot,e_total,momentum_x,momentum_y,com_x,com_y,raw_distance,shift_distance,shift_x,shift_y,d_reduced,stability,norm_ratio";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSeries {
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsSeries {
    pub fn push(&mut self, row: DiagnosticsRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::Domain(format!("diagnostic time {} not after {}", row.t, last.t)));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{DIAGNOSTICS_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.t_dyn_units,
                r.n_particles,
                r.mass,
                r.e_kin,
                r.e_pot,
                r.e_total,
                r.momentum[0],
                r.momentum[1],
                r.center_of_mass[0],
                r.center_of_mass[1],
                r.raw_distance,
                r.shift_distance,
                r.shift[0],
                r.shift[1],
                r.d_reduced,
                r.stability,
                r.norm_ratio
            )?;
        }
        Ok(())
    }

    /// `max_t |E(t) − E(0)| / |E(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        self.rows
            .iter()
            .map(|r| (r.e_total - first.e_total).abs() / first.e_total.abs())
            .fold(0.0, f64::max)
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: DiagnosticsSeries,
    /// `(t, CIC density)` at the snapshot cadence.
    pub snapshots: Vec<(f64, PlanarField)>,
    pub final_ensemble: ParticleEnsemble,
    pub t_dyn: f64,
    pub dt: f64,
    pub dropped: usize,
    pub dropped_mass: f64,
    pub energy_drift: f64,
    /// Largest `|ΔP|` over a single step.
    pub max_momentum_step: f64,
    /// Energy drift exceeded the configured tolerance.
    pub flagged: bool,
}

/// Reference `ρ₀` and `U₀` sampled on a planar grid around a centre.
#[derive(Debug, Clone)]
pub struct GridReference {
    pub psi: ConvexModel,
    pub rho0: RadialField,
    pub u0: RadialField,
    pub e0: f64,
    pub mass: f64,
}

impl GridReference {
    pub fn new(solution: &SteadyStateSolution) -> Self {
        Self {
            psi: solution.psi.clone(),
            rho0: solution.rho0.clone(),
            u0: solution.u0.clone(),
            e0: solution.e0,
            mass: solution.mass,
        }
    }

    pub fn density(&self, n: usize, h: f64, center: [f64; 2]) -> Result<PlanarField> {
        PlanarField::from_radial(n, h, &self.rho0, center)
    }

    /// `U₀` with the monopole `−M/r` beyond the radial grid.
    pub fn potential(&self, n: usize, h: f64, center: [f64; 2]) -> Result<PlanarField> {
        let outer = self.u0.outer_radius();
        PlanarField::from_fn(n, h, |x, y| {
            let r = (x - center[0]).hypot(y - center[1]);
            if r <= outer {
                self.u0.interpolate(r)
            } else {
                -self.mass / r
            }
        })
    }
}

/// Samples `f₀`, applies `perturbation` and evolves with PIC.
pub fn run(
    solution: &SteadyStateSolution,
    lifted: &LiftedState,
    cfg: &SimConfig,
    perturbation: &Perturbation,
) -> Result<RunOutput> {
    cfg.validate()?;
    let base = sample_steady(lifted, cfg.np, cfg.seed)?;
    let ensemble = perturb(&base, perturbation, cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;
    let p = lifted.phi.exponent();
    let norm_ratio = p.and_then(|p| perturbation.norm_ratio(p)).unwrap_or(f64::NAN);
    run_ensemble(solution, cfg, ensemble, norm_ratio)
}

/// Evolves a given ensemble; `ρ₀` of `solution` is the reference state.
pub fn run_ensemble(
    solution: &SteadyStateSolution,
    cfg: &SimConfig,
    mut ensemble: ParticleEnsemble,
    norm_ratio: f64,
) -> Result<RunOutput> {
    cfg.validate()?;
    let t_dyn = dynamical_time(solution);
    if !(t_dyn.is_finite() && t_dyn > 0.0) {
        return Err(Error::Config(format!("dynamical time {t_dyn} is not usable")));
    }
    let dt = cfg.dt * t_dyn;
    let h = cfg.box_factor * solution.support_radius / cfg.n as f64;
    let solver = PicSolver::new(cfg.n, h)?;
    let reference = GridReference::new(solution);
    let rho0_grid = reference.density(cfg.n, h, [0.0, 0.0])?;

    let mut dropped = drop_escaped(&mut ensemble, cfg.n, h);
    let initial_mass = ensemble.mass() + dropped as f64 * ensemble.weight;
    let (mut acc, mut fields) = solver.accelerations(&ensemble)?;
    let n_steps = cfg.steps(cfg.t_end);
    let diag_stride = cfg.steps(cfg.diag_every);
    let snap_stride = cfg.snapshot_every.map(|s| cfg.steps(s));

    let mut series = DiagnosticsSeries::default();
    let mut snapshots = Vec::new();
    let mut max_momentum_step: f64 = 0.0;
    let row = diagnostics(&solver, &reference, &rho0_grid, &ensemble, &fields, 0.0, t_dyn, norm_ratio)?;
    series.push(row)?;
    if snap_stride.is_some() {
        snapshots.push((0.0, fields.rho.clone()));
    }
    for step in 1..=n_steps {
        let p_before = ensemble.momentum();
        let mut latest = None;
        leapfrog_step(&mut ensemble, &mut acc, dt, |e| {
            let lost = drop_escaped(e, cfg.n, h);
            if lost > 0 {
                log::warn!("dropped {lost} particles leaving the grid at step {step}");
                dropped += lost;
            }
            let (a, f) = solver.accelerations(e)?;
            latest = Some(f);
            Ok(a)
        })?;
        fields = latest.expect("accelerations computed");
        let p_after = ensemble.momentum();
        max_momentum_step = max_momentum_step.max((p_after[0] - p_before[0]).hypot(p_after[1] - p_before[1]));
        let t = step as f64 * dt;
        if step % diag_stride == 0 || step == n_steps {
            series.push(diagnostics(&solver, &reference, &rho0_grid, &ensemble, &fields, t, t_dyn, norm_ratio)?)?;
        }
        if let Some(s) = snap_stride {
            if step % s == 0 {
                snapshots.push((t, fields.rho.clone()));
            }
        }
    }
    let energy_drift = series.energy_drift();
    let flagged = energy_drift > cfg.drift_tolerance;
    if flagged {
        log::warn!("energy drift {energy_drift:e} exceeds {:e}", cfg.drift_tolerance);
    }
    Ok(RunOutput {
        series,
        snapshots,
        dropped_mass: initial_mass - ensemble.mass(),
        final_ensemble: ensemble,
        t_dyn,
        dt,
        dropped,
        energy_drift,
        max_momentum_step,
        flagged,
    })
}

#[allow(clippy::too_many_arguments)]
fn diagnostics(
    solver: &PicSolver,
    reference: &GridReference,
    rho0_grid: &PlanarField,
    ensemble: &ParticleEnsemble,
    fields: &PicFields,
    t: f64,
    t_dyn: f64,
    norm_ratio: f64,
) -> Result<DiagnosticsRow> {
    let (n, h) = (solver.n(), solver.h());
    let fit = best_shift_with(solver.table(), &fields.rho, rho0_grid)?;
    let rho0_a = reference.density(n, h, fit.shift)?;
    let u0_a = reference.potential(n, h, fit.shift)?;
    let d = d_reduced(&reference.psi, &fields.rho, &rho0_a, &u0_a, reference.e0)?;
    let e_kin = ensemble.kinetic_energy();
    let e_pot = fields.potential_energy();
    Ok(DiagnosticsRow {
        t,
        t_dyn_units: t / t_dyn,
        n_particles: ensemble.len(),
        mass: ensemble.mass(),
        e_kin,
        e_pot,
        e_total: e_kin + e_pot,
        momentum: ensemble.momentum(),
        center_of_mass: ensemble.center_of_mass(),
        raw_distance: fit.raw_distance,
        shift_distance: fit.distance,
        shift: fit.shift,
        d_reduced: d,
        stability: fit.distance + d,
        norm_ratio,
    })
}
