//! Executable checks of the identities and inequalities behind the solvers,
//! with JSON-lines reports.

mod family;
mod inequalities;
mod reduction;
mod scaling;
mod suite;

pub use family::{DensityFamily, FamilySpec, Profile};
pub use inequalities::{
    check_inequalities, concentration, fit_simplex_constant, shifting_constant, InequalitySettings,
};
pub use reduction::{check_reduction, convexity_defect, ReductionSettings};
pub use scaling::{check_dilation, check_scaling, ScalingSettings};
pub use suite::{
    full_report, DilationCase, FullReport, InequalityCase, MassScanCase, ReductionCase, ScalingCase, SteadyCase,
    VerifyConfig,
};

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Marks checks whose constant was fitted on the family instead of known in closed form.
pub const EMPIRICAL_CONSTANT: &str = "empirical-constant";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "limit", rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    /// Recorded for reference; never fails.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    /// `None` when the measured quantity was not finite.
    pub value: Option<f64>,
    pub bound: Bound,
    pub pass: bool,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: String,
    /// The identity or inequality being tested, in words.
    pub statement: String,
    /// SHA-256 of the JSON-serialised inputs.
    pub inputs_digest: String,
    pub measurements: Vec<Measurement>,
    /// Headline relative tolerance; each measurement carries its own bound.
    pub tolerance: f64,
    pub pass: bool,
    pub flags: Vec<String>,
    pub notes: Vec<String>,
    pub error: Option<String>,
}

impl CheckReport {
    pub fn new<T: Serialize + ?Sized>(id: &str, statement: &str, inputs: &T, tolerance: f64) -> Self {
        Self {
            id: id.to_string(),
            statement: statement.to_string(),
            inputs_digest: digest(inputs),
            measurements: Vec::new(),
            tolerance,
            pass: true,
            flags: Vec::new(),
            notes: Vec::new(),
            error: None,
        }
    }

    pub fn record(&mut self, name: &str, value: f64, bound: Bound) -> bool {
        let ok = value.is_finite()
            && match bound {
                Bound::AtMost(l) => value <= l,
                Bound::AtLeast(l) => value >= l,
                Bound::Info => true,
            };
        self.measurements.push(Measurement {
            name: name.to_string(),
            value: value.is_finite().then_some(value),
            bound,
            pass: ok,
        });
        self.pass &= ok;
        ok
    }

    pub fn at_most(&mut self, name: &str, value: f64, limit: f64) -> bool {
        self.record(name, value, Bound::AtMost(limit))
    }

    pub fn at_least(&mut self, name: &str, value: f64, limit: f64) -> bool {
        self.record(name, value, Bound::AtLeast(limit))
    }

    pub fn info(&mut self, name: &str, value: f64) {
        self.record(name, value, Bound::Info);
    }

    pub fn flag(&mut self, flag: &str) {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Records an error; the check fails but the batch continues.
    pub fn fail(&mut self, err: &Error) {
        self.error = Some(err.to_string());
        self.pass = false;
    }

    pub fn measurement(&self, name: &str) -> Option<&Measurement> {
        self.measurements.iter().find(|m| m.name == name)
    }

    /// Names of failing measurements.
    pub fn failures(&self) -> Vec<&str> {
        self.measurements.iter().filter(|m| !m.pass).map(|m| m.name.as_str()).collect()
    }
}

/// Hex SHA-256 of the JSON form of `inputs`.
pub fn digest<T: Serialize + ?Sized>(inputs: &T) -> String {
    let bytes = serde_json::to_vec(inputs).expect("inputs serialise");
    hex::encode(Sha256::digest(&bytes))
}

pub fn write_jsonl<W: Write>(reports: &[CheckReport], mut out: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub const SUMMARY_HEADER: &str = "id,pass,measurements,failed,tolerance,flags,error";

/// One row per report: counts, failing measurement names and flags.
pub fn write_summary_csv<W: Write>(reports: &[CheckReport], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{:e},{},{}",
            r.id,
            r.pass,
            r.measurements.len(),
            r.failures().join(";"),
            r.tolerance,
            r.flags.join(";"),
            r.error.as_deref().unwrap_or("").replace([',', '\n'], " ")
        )?;
    }
    Ok(())
}
