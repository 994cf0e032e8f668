use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Energies, Residuals, SolverConfig, SteadyStateSolution};
use crate::casimir::ConvexModel;
use crate::error::{Error, Result};
use crate::field::{Field, RadialField};

pub const SOLUTION_JSON: &str = "solution.json";
pub const RHO0_CSV: &str = "rho0.csv";
pub const U0_CSV: &str = "U0.csv";

#[derive(Serialize, Deserialize)]
struct Scalars {
    mass: f64,
    e0: f64,
    support_radius: f64,
    energies: Energies,
    residuals: Residuals,
    model: ConvexModel,
    iterations: usize,
    trace: Vec<f64>,
    config: SolverConfig,
}

/// Writes `solution.json`, `rho0.csv` and `U0.csv` into `dir` (created if missing).
/// Returns the written paths.
pub fn save_solution(dir: &Path, solution: &SteadyStateSolution) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let scalars = Scalars {
        mass: solution.mass,
        e0: solution.e0,
        support_radius: solution.support_radius,
        energies: solution.energies,
        residuals: solution.residuals,
        model: solution.psi.clone(),
        iterations: solution.iterations,
        trace: solution.trace.clone(),
        config: solution.config,
    };
    let json_path = dir.join(SOLUTION_JSON);
    let mut out = BufWriter::new(fs::File::create(&json_path)?);
    serde_json::to_writer_pretty(&mut out, &scalars)?;
    writeln!(out)?;
    out.flush()?;
    let rho_path = dir.join(RHO0_CSV);
    write_profile(&rho_path, "rho0", &solution.rho0)?;
    let u_path = dir.join(U0_CSV);
    write_profile(&u_path, "U0", &solution.u0)?;
    Ok(vec![json_path, rho_path, u_path])
}

fn write_profile(path: &Path, name: &str, field: &RadialField) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "radius,{name}")?;
    for (r, v) in field.nodes().iter().zip(field.values()) {
        // `{}` on f64 prints the shortest string that round-trips.
        writeln!(out, "{r},{v}")?;
    }
    out.flush()?;
    Ok(())
}

fn read_profile(path: &Path) -> Result<RadialField> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = || -> Result<f64> {
            parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("{}:{}: malformed row", path.display(), lineno + 1)))
        };
        nodes.push(next()?);
        values.push(next()?);
    }
    RadialField::new(nodes, values)
}

pub fn load_solution(dir: &Path) -> Result<SteadyStateSolution> {
    let scalars: Scalars = serde_json::from_reader(BufReader::new(fs::File::open(dir.join(SOLUTION_JSON))?))?;
    let rho0 = read_profile(&dir.join(RHO0_CSV))?;
    let u0 = read_profile(&dir.join(U0_CSV))?;
    rho0.check_same_grid(&u0)?;
    Ok(SteadyStateSolution {
        psi: scalars.model,
        mass: scalars.mass,
        rho0,
        u0,
        e0: scalars.e0,
        support_radius: scalars.support_radius,
        energies: scalars.energies,
        residuals: scalars.residuals,
        trace: scalars.trace,
        iterations: scalars.iterations,
        config: scalars.config,
    })
}
