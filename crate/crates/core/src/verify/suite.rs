use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reduction::model_label;
use super::{
    check_dilation, check_inequalities, check_reduction, check_scaling, CheckReport, InequalitySettings,
    Profile, ReductionSettings, ScalingSettings,
};
use crate::casimir::{polytrope_psi, reduce_phi_to_psi, ConvexModel, ReductionGrid};
use crate::error::Result;
use crate::steady::{
    consistency_check, equilibrium_checks, lift, scan_mass, solve_reduced, SolverConfig, SteadyProblem,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCase {
    pub phi: ConvexModel,
    #[serde(default)]
    pub settings: ReductionSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCase {
    pub phi: ConvexModel,
    pub profile: Profile,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub settings: ScalingSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationCase {
    pub phi: ConvexModel,
    pub profile: Profile,
    pub factors: Vec<f64>,
    #[serde(default)]
    pub settings: ScalingSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCase {
    pub phi: ConvexModel,
    #[serde(default)]
    pub settings: InequalitySettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyCase {
    pub phi: ConvexModel,
    pub mass: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Bound on the virial and hydrostatic residuals.
    pub tolerance: f64,
    /// Bound on the lifting density and value-equality errors.
    pub lift_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassScanCase {
    pub phi: ConvexModel,
    pub masses: Vec<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Bound on `|fitted − expected|` of the homogeneity exponent.
    pub tolerance: f64,
}

/// What [`full_report`] runs. The default is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    #[serde(default)]
    pub reduction: Vec<ReductionCase>,
    #[serde(default)]
    pub scaling: Vec<ScalingCase>,
    #[serde(default)]
    pub dilation: Vec<DilationCase>,
    #[serde(default)]
    pub inequalities: Vec<InequalityCase>,
    #[serde(default)]
    pub steady: Vec<SteadyCase>,
    #[serde(default)]
    pub mass_scan: Vec<MassScanCase>,
    /// Replaces every tolerance of every case when set.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl VerifyConfig {
    /// The shipped battery for `Φ(f) = c·f^{1+1/k}`.
    pub fn shipped(coefficient: f64, k: f64) -> Result<Self> {
        let phi = ConvexModel::polytrope_k(coefficient, k)?;
        let mut reduction: Vec<ReductionCase> = [0.5, 0.9]
            .into_iter()
            .chain((k != 0.5 && k != 0.9).then_some(k))
            .map(|kk| {
                Ok(ReductionCase {
                    phi: ConvexModel::polytrope_k(coefficient, kk)?,
                    settings: ReductionSettings::default(),
                })
            })
            .collect::<Result<_>>()?;
        reduction.push(ReductionCase {
            phi: ConvexModel::polytrope(1.0, 2.0)?,
            settings: ReductionSettings::default(),
        });
        let gaussian = Profile::Gaussian {
            mass: 1.0,
            width: 1.0,
            center: [0.0, 0.0],
        };
        let scaling = [(1.0, 1.0), (2.0, 3.0), (0.5, 0.7)]
            .into_iter()
            .map(|(a, b)| ScalingCase {
                phi: phi.clone(),
                profile: gaussian,
                a,
                b,
                settings: ScalingSettings::default(),
            })
            .collect();
        Ok(Self {
            reduction,
            scaling,
            dilation: vec![DilationCase {
                phi: phi.clone(),
                profile: gaussian,
                factors: vec![1.0, 0.5, 0.25, 0.1],
                settings: ScalingSettings::default(),
            }],
            inequalities: vec![InequalityCase {
                phi: phi.clone(),
                settings: InequalitySettings::default(),
            }],
            steady: vec![SteadyCase {
                phi: phi.clone(),
                mass: 1.0,
                solver: SolverConfig::default(),
                tolerance: 1e-3,
                lift_tolerance: 1e-4,
            }],
            mass_scan: vec![MassScanCase {
                phi,
                masses: vec![0.5, 1.0],
                solver: SolverConfig::default(),
                tolerance: 1e-3,
            }],
            tolerance: None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FullReport {
    pub reports: Vec<CheckReport>,
}

impl FullReport {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    /// 0 when every check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn failed(&self) -> Vec<&CheckReport> {
        self.reports.iter().filter(|r| !r.pass).collect()
    }
}

/// `Ψ` for a kinetic model: closed form for polytropes, numeric otherwise.
fn psi_for(phi: &ConvexModel) -> Result<ConvexModel> {
    match phi {
        ConvexModel::Polytrope { coefficient, exponent } => polytrope_psi(*coefficient, 1.0 / (exponent - 1.0)),
        ConvexModel::Tabulated(_) => reduce_phi_to_psi(phi, ReductionGrid::default()),
    }
}

type Job = Box<dyn Fn() -> CheckReport + Send + Sync>;

/// Runs every configured check; errors are recorded per check and never abort
/// the batch. Checks run in parallel and are reported sorted by id.
pub fn full_report(config: &VerifyConfig) -> FullReport {
    let tol = config.tolerance;
    let mut jobs: Vec<Job> = Vec::new();
    for case in &config.reduction {
        let mut c = case.clone();
        if let Some(t) = tol {
            c.settings.grid.tol = t;
            c.settings.index_tol = t;
        }
        jobs.push(Box::new(move || check_reduction(&c.phi, &c.settings)));
    }
    for case in &config.scaling {
        let mut c = case.clone();
        if let Some(t) = tol {
            c.settings.tol = t;
        }
        jobs.push(Box::new(move || {
            let id = format!("scaling/a={},b={}", c.a, c.b);
            guarded(&id, &c, || check_scaling(&psi_for(&c.phi)?, &c.profile, c.a, c.b, &c.settings))
        }));
    }
    for case in &config.dilation {
        let mut c = case.clone();
        if let Some(t) = tol {
            c.settings.tol = t;
        }
        jobs.push(Box::new(move || {
            guarded("scaling/dilation", &c, || {
                check_dilation(&psi_for(&c.phi)?, &c.profile, &c.factors, &c.settings)
            })
        }));
    }
    for case in &config.inequalities {
        let mut c = case.clone();
        if let Some(t) = tol {
            c.settings.headroom = t;
        }
        jobs.push(Box::new(move || match psi_for(&c.phi) {
            Ok(psi) => check_inequalities(&psi, &c.settings),
            Err(e) => {
                let mut r = CheckReport::new("inequalities", "inequality battery", &c, c.settings.headroom);
                r.fail(&e);
                r
            }
        }));
    }
    for case in &config.steady {
        let mut c = case.clone();
        if let Some(t) = tol {
            c.tolerance = t;
            c.lift_tolerance = t;
            c.solver.el_tol = c.solver.el_tol.min(t);
        }
        jobs.push(Box::new(move || steady_report(&c)));
    }
    for case in &config.mass_scan {
        let mut c = case.clone();
        if let Some(t) = tol {
            c.tolerance = t;
        }
        jobs.push(Box::new(move || mass_scan_report(&c)));
    }
    let mut reports: Vec<CheckReport> = jobs.par_iter().map(|j| j()).collect();
    reports.sort_by(|a, b| a.id.cmp(&b.id));
    FullReport { reports }
}

fn guarded<T: Serialize>(id: &str, inputs: &T, f: impl FnOnce() -> Result<CheckReport>) -> CheckReport {
    f().unwrap_or_else(|e| {
        let mut r = CheckReport::new(id, "check could not run", inputs, f64::NAN);
        r.fail(&e);
        r
    })
}

fn steady_report(c: &SteadyCase) -> CheckReport {
    let mut r = CheckReport::new(
        &format!("steady/M={},{}", c.mass, model_label(&c.phi)),
        "minimiser: EL residual, E₀ < 0, h < 0, virial and hydrostatic balance, lifted density and H_C(f₀) = H(ρ₀)",
        c,
        c.tolerance,
    );
    let run = |r: &mut CheckReport| -> Result<()> {
        let psi = psi_for(&c.phi)?;
        let mut problem = SteadyProblem::new(psi.clone(), c.mass);
        problem.config = c.solver;
        problem.phi = Some(c.phi.clone());
        let s = solve_reduced(&problem)?;
        let eq = equilibrium_checks(&s, &psi)?;
        r.info("iterations", s.iterations as f64);
        r.info("h", s.energies.h_value);
        r.info("e_pot", s.energies.e_pot);
        r.at_most("el_residual", eq.el, c.solver.el_tol);
        r.at_most("e0", s.e0, 0.0);
        r.at_most("h_negative", s.energies.h_value, 0.0);
        r.at_most("virial", eq.virial, c.tolerance);
        r.at_most("hydrostatic", eq.hydrostatic, c.tolerance);
        r.at_most("mass_error", eq.mass_error, 1e-10);
        let lifted = lift(&s, &c.phi)?;
        let cons = consistency_check(&lifted, &s.rho0)?;
        r.at_most("lift_density", cons.density_error, c.lift_tolerance);
        r.at_most("value_equality", cons.value_error, c.lift_tolerance);
        Ok(())
    };
    if let Err(e) = run(&mut r) {
        r.fail(&e);
    }
    r
}

fn mass_scan_report(c: &MassScanCase) -> CheckReport {
    let mut r = CheckReport::new(
        &format!("mass_scan/{}", model_label(&c.phi)),
        "h_M < 0; h_{M̄} ≥ (M̄/M)^{3/2} h_M; fitted exponent of |h_M| ∝ M^α at least 3/2 and equal to (3−n)/(2−n)",
        c,
        c.tolerance,
    );
    let run = |r: &mut CheckReport| -> Result<()> {
        let psi = psi_for(&c.phi)?;
        let scan = scan_mass(&psi, &c.masses, c.solver)?;
        for row in &scan.rows {
            r.info(&format!("h(M={})", row.mass), row.h);
        }
        let worst = scan.rows.iter().map(|row| row.h).fold(f64::NEG_INFINITY, f64::max);
        r.at_most("max_h", worst, 0.0);
        r.at_most("scaling_violations", scan.violations.len() as f64, 0.0);
        if let Some(fit) = scan.fitted_exponent {
            r.at_least("fitted_exponent", fit, 1.5);
            if let Some(exp) = scan.expected_exponent {
                r.info("expected_exponent", exp);
                r.at_most("exponent_error", (fit - exp).abs(), c.tolerance);
            }
        }
        Ok(())
    };
    if let Err(e) = run(&mut r) {
        r.fail(&e);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_passes() {
        let r = full_report(&VerifyConfig::default());
        assert!(r.reports.is_empty());
        assert_eq!(r.exit_code(), 0);
    }

    #[test]
    fn errors_are_reported_not_raised() {
        let phi = ConvexModel::polytrope_k(1.0, 0.5).unwrap();
        let cfg = VerifyConfig {
            scaling: vec![ScalingCase {
                phi,
                profile: Profile::Gaussian {
                    mass: 1.0,
                    width: 1.0,
                    center: [0.0, 0.0],
                },
                a: 1.0,
                b: 0.01,
                settings: ScalingSettings::default(),
            }],
            ..Default::default()
        };
        let r = full_report(&cfg);
        assert_eq!(r.exit_code(), 1);
        assert!(r.reports[0].error.as_deref().unwrap().contains("box"));
    }
}
