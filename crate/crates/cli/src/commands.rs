//! Subcommand implementations. Each one validates its inputs, checks that the
//! output directory is writable, computes, then writes its files below a
//! subdirectory of its own and refreshes the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flatgrav_core::casimir::{reduce_detailed, reduce_phi_to_psi, polytrope_psi, ReductionGrid};
use flatgrav_core::dynamics::{perturb, run_ensemble, sample_steady, write_fpart, Perturbation, SimConfig};
use flatgrav_core::poisson::write_fgrid;
use flatgrav_core::steady::{
    consistency_check, equilibrium_checks, lift, load_solution, save_solution, scan_mass, solve_reduced, LiftedState,
    SteadyProblem,
};
use flatgrav_core::verify::{
    full_report, write_jsonl, write_summary_csv, DilationCase, Profile, ReductionCase, ReductionSettings, ScalingCase,
    ScalingSettings, VerifyConfig,
};
use flatgrav_core::ConvexModel;
use serde::Serialize;
use thiserror::Error;

use crate::config::{
    parse_config_for, stream_seed, CheckKind, Command, ModelSpec, PerturbationKind, RunConfig, STREAMS,
};
use crate::manifest::{ensure_writable, sha256_hex, update_manifest, RunRecord};

pub const SOLUTION_DIR: &str = "solution";
pub const LIFTED_JSON: &str = "lift/lifted.json";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, missing prerequisites or an unusable output directory.
    #[error("{0}")]
    Usage(String),
    /// The computation itself failed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Failed(_) => 1,
        }
    }
}

impl From<flatgrav_core::Error> for CliError {
    fn from(e: flatgrav_core::Error) -> Self {
        use flatgrav_core::Error as E;
        match e {
            E::Config(_) | E::Io(_) | E::ModelMismatch(_) => Self::Usage(e.to_string()),
            _ => Self::Failed(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// Outcome of a subcommand that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// All checks the subcommand applies passed.
    pub passed: bool,
    pub output_dir: PathBuf,
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Runs `command` with the configuration file at `config_path`.
pub fn dispatch(command: Command, config_path: &Path) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(config_path).map_err(|e| io_error(config_path, e))?;
    let cfg = parse_config_for(&text, command)
        .map_err(|e| CliError::Usage(format!("invalid configuration {}:\n{e}", config_path.display())))?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let ctx = Context::new(command, &cfg, base)?;
    let outcome = match command {
        Command::Reduce => ctx.reduce()?,
        Command::Solve => ctx.solve()?,
        Command::Lift => ctx.lift()?,
        Command::Verify => ctx.verify()?,
        Command::Simulate => ctx.simulate()?,
        Command::ScanMass => ctx.scan_mass()?,
    };
    ctx.finish(&text, outcome)
}

/// Resolved inputs shared by all subcommands.
struct Context<'c> {
    command: Command,
    cfg: &'c RunConfig,
    out: PathBuf,
    model: ModelSpec,
    /// `Φ` as loaded; absent for a bare `Ψ`.
    phi: Option<ConvexModel>,
}

/// Files produced by a subcommand, written after the computation succeeds.
struct Produced {
    passed: bool,
    summary: Vec<String>,
    writes: Vec<Box<dyn FnOnce(&Path) -> flatgrav_core::Result<()>>>,
}

impl Produced {
    fn new(passed: bool) -> Self {
        Self {
            passed,
            summary: Vec::new(),
            writes: Vec::new(),
        }
    }

    fn line(&mut self, s: String) {
        self.summary.push(s);
    }

    fn file(&mut self, rel: &str, bytes: Vec<u8>) {
        let rel = rel.to_string();
        self.writes.push(Box::new(move |root| {
            let path = root.join(&rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, bytes)?;
            Ok(())
        }));
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
        bytes.push(b'\n');
        self.file(rel, bytes);
        Ok(())
    }
}

fn buffer<F>(f: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> flatgrav_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

impl<'c> Context<'c> {
    fn new(command: Command, cfg: &'c RunConfig, base: &Path) -> Result<Self, CliError> {
        let output = cfg.output.as_ref().expect("required section");
        let model = cfg.model.clone().expect("required section");
        let out = base.join(&output.directory);
        let phi = match &model {
            ModelSpec::Phi { coefficient, k } => Some(ConvexModel::polytrope_k(*coefficient, *k)?),
            ModelSpec::Psi { .. } => None,
            ModelSpec::PhiTable { path } => {
                let path = base.join(path);
                if !path.is_file() {
                    return Err(CliError::Usage(format!("model table {} not found", path.display())));
                }
                Some(ConvexModel::load_csv(&path)?)
            }
        };
        Ok(Self {
            command,
            cfg,
            out,
            model,
            phi,
        })
    }

    fn require_phi(&self) -> Result<&ConvexModel, CliError> {
        self.phi.as_ref().ok_or_else(|| {
            CliError::Usage(format!(
                "`{}` needs the kinetic model Φ: give `k` or a table in [model], not `n`",
                self.command
            ))
        })
    }

    fn psi(&self) -> Result<ConvexModel, CliError> {
        Ok(match &self.model {
            ModelSpec::Phi { coefficient, k } => polytrope_psi(*coefficient, *k)?,
            ModelSpec::Psi { coefficient, n } => ConvexModel::polytrope(*coefficient, 1.0 + 1.0 / n)?,
            ModelSpec::PhiTable { .. } => reduce_phi_to_psi(self.require_phi()?, ReductionGrid::default())?,
        })
    }

    fn streams(&self) -> BTreeMap<String, u64> {
        STREAMS
            .iter()
            .map(|s| (s.to_string(), stream_seed(self.cfg.seed, s)))
            .collect()
    }

    /// Loads `solution/` after checking it exists.
    fn solution(&self) -> Result<flatgrav_core::steady::SteadyStateSolution, CliError> {
        let dir = self.out.join(SOLUTION_DIR);
        if !dir.is_dir() {
            return Err(CliError::Usage(format!(
                "solution directory {} does not exist; run `solve` with this configuration first",
                dir.display()
            )));
        }
        load_solution(&dir).map_err(|e| CliError::Usage(format!("cannot load solution from {}: {e}", dir.display())))
    }

    fn finish(&self, config_text: &str, produced: Produced) -> Result<Outcome, CliError> {
        let outcome = Outcome {
            passed: produced.passed,
            output_dir: self.out.clone(),
            summary: produced.summary,
        };
        let sub = self.command.name().replace('-', "_");
        let clear = |p: &Path| match fs::remove_dir_all(p) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io_error(p, e)),
            _ => Ok(()),
        };
        if self.command != Command::Solve {
            clear(&self.out.join(&sub))?;
        }
        let config_rel = format!("configs/{}.toml", self.command.name());
        for write in produced.writes {
            write(&self.out).map_err(|e| io_error(&self.out, e))?;
        }
        fs::create_dir_all(self.out.join("configs")).map_err(|e| io_error(&self.out, e))?;
        fs::write(self.out.join(&config_rel), config_text).map_err(|e| io_error(&self.out, e))?;
        update_manifest(
            &self.out,
            RunRecord {
                subcommand: self.command.name().to_string(),
                config: config_rel,
                config_sha256: sha256_hex(config_text.as_bytes()),
                seed: self.cfg.seed,
                streams: self.streams(),
                exit_code: outcome.exit_code(),
            },
        )
        .map_err(|e| io_error(&self.out, e))?;
        Ok(outcome)
    }

    fn writable(&self) -> Result<(), CliError> {
        ensure_writable(&self.out)
            .map_err(|e| CliError::Usage(format!("output directory {} is not writable: {e}", self.out.display())))
    }

    fn reduce(&self) -> Result<Produced, CliError> {
        let phi = self.require_phi()?.clone();
        self.writable()?;
        let red = reduce_detailed(&phi, ReductionGrid::default())?;
        let mut p = Produced::new(true);
        p.file("reduce/psi.csv", buffer(|b| red.numeric.write_csv(b, &[]))?);
        #[derive(Serialize)]
        struct Summary {
            phi: Option<ConvexModel>,
            psi_closed_form: Option<ConvexModel>,
            psi_table: &'static str,
            expected_n: Option<f64>,
            fitted_n: f64,
            quadrature_error: f64,
            closed_form_error: Option<f64>,
        }
        let polytrope = matches!(phi, ConvexModel::Polytrope { .. });
        p.json(
            "reduce/reduction.json",
            &Summary {
                phi: polytrope.then(|| phi.clone()),
                psi_closed_form: polytrope.then(|| red.psi.clone()),
                psi_table: "psi.csv",
                expected_n: phi.index().map(|k| k + 1.0),
                fitted_n: red.fitted_n,
                quadrature_error: red.quadrature_error,
                closed_form_error: red.closed_form_error,
            },
        )?;
        p.line(format!("fitted n = {:.8}", red.fitted_n));
        if let Some(e) = red.closed_form_error {
            p.line(format!("max relative deviation from closed form = {e:.3e}"));
        }
        Ok(p)
    }

    fn solve(&self) -> Result<Produced, CliError> {
        let problem_cfg = self.cfg.problem.as_ref().expect("required section");
        let mass = problem_cfg.mass.expect("required key");
        let psi = self.psi()?;
        self.writable()?;
        let problem = SteadyProblem {
            psi: psi.clone(),
            phi: self.phi.clone(),
            mass,
            config: problem_cfg.solver,
            initial: None,
        };
        let solution = solve_reduced(&problem)?;
        let checks = equilibrium_checks(&solution, &psi)?;
        let mut p = Produced::new(checks.pass);
        p.line(format!(
            "h = {:.10}, E0 = {:.10}, {} iterations",
            solution.energies.h_value, solution.e0, solution.iterations
        ));
        p.line(format!(
            "residuals: EL {:.2e}, virial {:.2e}, hydrostatic {:.2e}",
            checks.el, checks.virial, checks.hydrostatic
        ));
        let dir = self.out.join(SOLUTION_DIR);
        p.writes.push(Box::new(move |_| {
            match fs::remove_dir_all(&dir) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
                _ => {}
            }
            save_solution(&dir, &solution)?;
            Ok(())
        }));
        p.json("solution/checks.json", &checks)?;
        Ok(p)
    }

    fn lift(&self) -> Result<Produced, CliError> {
        let phi = self.require_phi()?;
        let solution = self.solution()?;
        self.writable()?;
        let lifted = lift(&solution, phi)?;
        let report = consistency_check(&lifted, &solution.rho0)?;
        let mut p = Produced::new(report.pass);
        p.line(format!(
            "density error {:.2e}, value error {:.2e} (tolerance {:.0e})",
            report.density_error, report.value_error, report.tolerance
        ));
        p.json(LIFTED_JSON, &lifted)?;
        p.json("lift/consistency.json", &report)?;
        Ok(p)
    }

    fn simulate(&self) -> Result<Produced, CliError> {
        let sim = self.cfg.sim.expect("required section");
        let output = self.cfg.output.as_ref().expect("required section");
        let solution = self.solution()?;
        let lifted_path = self.out.join(LIFTED_JSON);
        if !lifted_path.is_file() {
            return Err(CliError::Usage(format!(
                "lifted state {} does not exist; run `lift` first",
                lifted_path.display()
            )));
        }
        let lifted: LiftedState = serde_json::from_slice(&fs::read(&lifted_path).map_err(|e| io_error(&lifted_path, e))?)
            .map_err(|e| io_error(&lifted_path, e))?;
        if lifted.mass != solution.mass || lifted.e0 != solution.e0 {
            return Err(CliError::Usage(format!(
                "{} was lifted from a different solution; rerun `lift`",
                lifted_path.display()
            )));
        }
        let streams = self.streams();
        let cfg = SimConfig {
            dt: sim.dt,
            t_end: sim.t_end,
            n: sim.n,
            box_factor: sim.box_factor,
            diag_every: output.diag_every,
            snapshot_every: output.snapshot_every,
            np: sim.np,
            seed: streams["sample"],
            drift_tolerance: sim.drift_tolerance,
        };
        cfg.validate()?;
        self.writable()?;
        let base = sample_steady(&lifted, cfg.np, cfg.seed)?;
        let perturbation = match sim.perturbation {
            PerturbationKind::None => Perturbation::None,
            PerturbationKind::Boost => Perturbation::Boost {
                velocity: [sim.amplitude * base.v_rms(), 0.0],
            },
            PerturbationKind::Scale => Perturbation::PositionScale {
                factor: 1.0 + sim.amplitude,
            },
            PerturbationKind::Noise => Perturbation::VelocityNoise { relative: sim.amplitude },
        };
        let ensemble = perturb(&base, &perturbation, streams["perturb"])?;
        let norm_ratio = lifted
            .phi
            .exponent()
            .and_then(|q| perturbation.norm_ratio(q))
            .unwrap_or(f64::NAN);
        let run = run_ensemble(&solution, &cfg, ensemble, norm_ratio)?;

        let mut p = Produced::new(!run.flagged);
        p.line(format!(
            "{} steps of {:.4e} (T_dyn = {:.6e}), energy drift {:.2e}, {} particles dropped",
            (cfg.t_end / cfg.dt).round(),
            run.dt,
            run.t_dyn,
            run.energy_drift,
            run.dropped
        ));
        p.file("simulate/diagnostics.csv", buffer(|b| run.series.write_csv(b))?);
        p.file("simulate/final.fpart", buffer(|b| write_fpart(b, &run.final_ensemble))?);
        if !run.snapshots.is_empty() {
            let mut index = String::from("index,t,t_over_tdyn,file\n");
            for (i, (t, rho)) in run.snapshots.iter().enumerate() {
                let name = format!("rho_{i:04}.fgrid");
                index.push_str(&format!("{i},{t},{},{name}\n", t / run.t_dyn));
                p.file(&format!("simulate/snapshots/{name}"), buffer(|b| write_fgrid(b, rho))?);
            }
            p.file("simulate/snapshots/index.csv", index.into_bytes());
        }
        #[derive(Serialize)]
        struct Summary {
            config: SimConfig,
            perturbation: Perturbation,
            t_dyn: f64,
            dt: f64,
            dropped: usize,
            dropped_mass: f64,
            energy_drift: f64,
            max_momentum_step: f64,
            flagged: bool,
        }
        p.json(
            "simulate/summary.json",
            &Summary {
                config: cfg,
                perturbation,
                t_dyn: run.t_dyn,
                dt: run.dt,
                dropped: run.dropped,
                dropped_mass: run.dropped_mass,
                energy_drift: run.energy_drift,
                max_momentum_step: run.max_momentum_step,
                flagged: run.flagged,
            },
        )?;
        Ok(p)
    }

    fn scan_mass(&self) -> Result<Produced, CliError> {
        let problem = self.cfg.problem.as_ref().expect("required section");
        let masses = problem.masses.as_ref().expect("required key");
        let psi = self.psi()?;
        self.writable()?;
        let scan = scan_mass(&psi, masses, problem.solver)?;
        let mut p = Produced::new(scan.all_negative && scan.violations.is_empty());
        let mut csv = String::from("mass,h,e0,iterations\n");
        for r in &scan.rows {
            csv.push_str(&format!("{},{},{},{}\n", r.mass, r.h, r.e0, r.iterations));
            p.line(format!("M = {}: h = {:.10}", r.mass, r.h));
        }
        if let (Some(a), Some(e)) = (scan.fitted_exponent, scan.expected_exponent) {
            p.line(format!("fitted exponent {a:.6} (homogeneity predicts {e:.6})"));
        }
        if !scan.violations.is_empty() {
            p.line(format!("scaling inequality violated for {:?}", scan.violations));
        }
        p.file("scan_mass/scan.csv", csv.into_bytes());
        p.json("scan_mass/scan.json", &scan)?;
        Ok(p)
    }

    fn verify_config(&self) -> Result<VerifyConfig, CliError> {
        let section = self.cfg.verify.as_ref().expect("required section");
        let mut cfg = match &self.model {
            ModelSpec::Phi { coefficient, k } => VerifyConfig::shipped(*coefficient, *k)?,
            ModelSpec::Psi { .. } => {
                self.require_phi()?;
                unreachable!()
            }
            ModelSpec::PhiTable { .. } => {
                let phi = self.require_phi()?.clone();
                let gaussian = Profile::Gaussian {
                    mass: 1.0,
                    width: 1.0,
                    center: [0.0, 0.0],
                };
                VerifyConfig {
                    reduction: vec![ReductionCase {
                        phi: phi.clone(),
                        settings: ReductionSettings::default(),
                    }],
                    scaling: vec![ScalingCase {
                        phi: phi.clone(),
                        profile: gaussian,
                        a: 2.0,
                        b: 3.0,
                        settings: ScalingSettings::default(),
                    }],
                    dilation: vec![DilationCase {
                        phi,
                        profile: gaussian,
                        factors: vec![1.0, 0.5, 0.25, 0.1],
                        settings: ScalingSettings::default(),
                    }],
                    ..Default::default()
                }
            }
        };
        let keep = |c: CheckKind| section.checks.contains(&c);
        if !keep(CheckKind::Reduction) {
            cfg.reduction.clear();
        }
        if !keep(CheckKind::Scaling) {
            cfg.scaling.clear();
        }
        if !keep(CheckKind::Dilation) {
            cfg.dilation.clear();
        }
        if !keep(CheckKind::Inequalities) {
            cfg.inequalities.clear();
        }
        if !keep(CheckKind::Steady) {
            cfg.steady.clear();
        }
        if !keep(CheckKind::MassScan) {
            cfg.mass_scan.clear();
        }
        let family_seed = stream_seed(self.cfg.seed, "family");
        for case in &mut cfg.inequalities {
            case.settings.family.seed = family_seed;
        }
        cfg.tolerance = section.tolerance;
        Ok(cfg)
    }

    fn verify(&self) -> Result<Produced, CliError> {
        let cfg = self.verify_config()?;
        self.writable()?;
        let report = full_report(&cfg);
        let mut p = Produced::new(report.passed());
        for r in &report.reports {
            let status = if r.pass { "pass" } else { "FAIL" };
            let mut line = format!("{status}  {}", r.id);
            if !r.pass {
                let failed = r.failures();
                if !failed.is_empty() {
                    line.push_str(&format!("  [{}]", failed.join(", ")));
                }
                if let Some(e) = &r.error {
                    line.push_str(&format!("  ({e})"));
                }
            }
            p.line(line);
        }
        p.file("verify/reports.jsonl", buffer(|b| write_jsonl(&report.reports, b))?);
        p.file("verify/summary.csv", buffer(|b| write_summary_csv(&report.reports, b))?);
        Ok(p)
    }
}
