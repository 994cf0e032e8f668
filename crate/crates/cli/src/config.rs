//! Run configuration: a `key = value` file with `[model]`, `[problem]`,
//! `[sim]`, `[output]` and `[verify]` sections plus a top-level `seed`.
//!
//! Parsing collects every error before giving up; each carries the line it
//! refers to. Unknown keys are rejected with the nearest known key as a hint.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use flatgrav_core::dynamics::{SimConfig, MAX_DT};
use flatgrav_core::field::MIN_RADIAL_NODES;
use flatgrav_core::steady::SolverConfig;
use flatgrav_core::ConvexModel;
use sha2::{Digest, Sha256};
use toml::de::{DeTable, DeValue};
use toml::Spanned;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    Reduce,
    Solve,
    Lift,
    Verify,
    Simulate,
    ScanMass,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Reduce,
        Command::Solve,
        Command::Lift,
        Command::Verify,
        Command::Simulate,
        Command::ScanMass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Reduce => "reduce",
            Self::Solve => "solve",
            Self::Lift => "lift",
            Self::Verify => "verify",
            Self::Simulate => "simulate",
            Self::ScanMass => "scan-mass",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn about(self) -> &'static str {
        match self {
            Self::Reduce => "Tabulate Ψ for the configured Φ",
            Self::Solve => "Compute the minimiser of the reduced functional at mass M",
            Self::Lift => "Lift a solved density to the kinetic steady state",
            Self::Verify => "Run the identity and inequality battery",
            Self::Simulate => "Evolve the lifted state with particle-in-cell",
            Self::ScanMass => "Tabulate (M, h_M) over a list of masses",
        }
    }

    /// Sections that must be present for this subcommand.
    pub fn sections(self) -> &'static [&'static str] {
        match self {
            Self::Reduce | Self::Lift => &["model", "output"],
            Self::Solve | Self::ScanMass => &["model", "problem", "output"],
            Self::Verify => &["model", "verify", "output"],
            Self::Simulate => &["model", "sim", "output"],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One recognised configuration key.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    /// Empty for top-level keys.
    pub section: &'static str,
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
    pub used_by: &'static [Command],
}

use Command::*;

const EVERY: &[Command] = &Command::ALL;
const SOLVING: &[Command] = &[Solve, ScanMass];

pub const KEYS: &[KeySpec] = &[
    KeySpec { section: "", key: "seed", default: "1", help: "top-level seed; per-purpose streams are derived from it", used_by: EVERY },
    KeySpec { section: "model", key: "kind", default: "required", help: "polytrope | table", used_by: EVERY },
    KeySpec { section: "model", key: "k", default: "-", help: "index of Φ(f) = c·f^(1+1/k); exclusive with n", used_by: EVERY },
    KeySpec { section: "model", key: "n", default: "-", help: "index of Ψ(ρ) = c·ρ^(1+1/n) when Φ is not needed; exclusive with k", used_by: EVERY },
    KeySpec { section: "model", key: "coefficient", default: "1", help: "coefficient c of the polytrope", used_by: EVERY },
    KeySpec { section: "model", key: "table", default: "-", help: "CSV of Φ samples (`# convex-model v1`), relative to the config file", used_by: EVERY },
    KeySpec { section: "problem", key: "M", default: "required", help: "total mass", used_by: &[Solve] },
    KeySpec { section: "problem", key: "masses", default: "required", help: "strictly increasing list of masses", used_by: &[ScanMass] },
    KeySpec { section: "problem", key: "theta", default: "0.5", help: "damping of the fixed-point iteration, in (0, 1]", used_by: SOLVING },
    KeySpec { section: "problem", key: "tol", default: "1e-8", help: "relative L1 step at convergence", used_by: SOLVING },
    KeySpec { section: "problem", key: "el_tol", default: "1e-6", help: "Euler-Lagrange residual at convergence", used_by: SOLVING },
    KeySpec { section: "problem", key: "max_iter", default: "5000", help: "iteration cap", used_by: SOLVING },
    KeySpec { section: "problem", key: "grid_points", default: "512", help: "radial grid nodes", used_by: SOLVING },
    KeySpec { section: "problem", key: "span_inner", default: "1e-3", help: "innermost radial node, in initial half-mass radii", used_by: SOLVING },
    KeySpec { section: "problem", key: "span_outer", default: "20", help: "outermost radial node, in initial half-mass radii", used_by: SOLVING },
    KeySpec { section: "sim", key: "np", default: "200000", help: "number of particles", used_by: &[Simulate] },
    KeySpec { section: "sim", key: "dt", default: "0.01", help: "time step in T_dyn", used_by: &[Simulate] },
    KeySpec { section: "sim", key: "t_end", default: "10", help: "run length in T_dyn", used_by: &[Simulate] },
    KeySpec { section: "sim", key: "n", default: "256", help: "cells per side of the PIC grid (power of two)", used_by: &[Simulate] },
    KeySpec { section: "sim", key: "box_factor", default: "10", help: "box side in support radii", used_by: &[Simulate] },
    KeySpec { section: "sim", key: "perturbation", default: "none", help: "none | boost | scale | noise", used_by: &[Simulate] },
    KeySpec { section: "sim", key: "amplitude", default: "0.05 boost, 0.01 otherwise", help: "boost: V/v_rms; scale: λ − 1; noise: kick dispersion / v_rms", used_by: &[Simulate] },
    KeySpec { section: "sim", key: "drift_tolerance", default: "1e-3", help: "relative energy drift that fails the run", used_by: &[Simulate] },
    KeySpec { section: "output", key: "directory", default: "required", help: "all files are written below this directory", used_by: EVERY },
    KeySpec { section: "output", key: "diag_every", default: "0.5", help: "diagnostics cadence in T_dyn", used_by: &[Simulate] },
    KeySpec { section: "output", key: "snapshot_every", default: "off", help: "density snapshot cadence in T_dyn", used_by: &[Simulate] },
    KeySpec { section: "verify", key: "checks", default: "all", help: "subset of reduction, scaling, dilation, inequalities, steady, mass_scan", used_by: &[Verify] },
    KeySpec { section: "verify", key: "tolerance", default: "per check", help: "replaces every check tolerance", used_by: &[Verify] },
];

pub const SECTIONS: [&str; 5] = ["model", "problem", "sim", "output", "verify"];

/// Keys `command` reads, in schema order.
pub fn keys_for(command: Command) -> impl Iterator<Item = &'static KeySpec> {
    KEYS.iter().filter(move |k| k.used_by.contains(&command))
}

/// Qualified key name as shown in messages and help: `[problem] M`, `seed`.
pub fn qualified(spec: &KeySpec) -> String {
    if spec.section.is_empty() {
        spec.key.to_string()
    } else {
        format!("[{}] {}", spec.section, spec.key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Every problem found in one configuration file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// `Φ(f) = c·f^{1+1/k}`.
    Phi { coefficient: f64, k: f64 },
    /// `Ψ(ρ) = c·ρ^{1+1/n}` with no kinetic model.
    Psi { coefficient: f64, n: f64 },
    /// Tabulated `Φ`; the path is as written in the file.
    PhiTable { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSection {
    pub mass: Option<f64>,
    pub masses: Option<Vec<f64>>,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    None,
    Boost,
    Scale,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSection {
    pub np: usize,
    pub dt: f64,
    pub t_end: f64,
    pub n: usize,
    pub box_factor: f64,
    pub perturbation: PerturbationKind,
    pub amplitude: f64,
    pub drift_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub diag_every: f64,
    pub snapshot_every: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckKind {
    Reduction,
    Scaling,
    Dilation,
    Inequalities,
    Steady,
    MassScan,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::Reduction,
        CheckKind::Scaling,
        CheckKind::Dilation,
        CheckKind::Inequalities,
        CheckKind::Steady,
        CheckKind::MassScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Reduction => "reduction",
            Self::Scaling => "scaling",
            Self::Dilation => "dilation",
            Self::Inequalities => "inequalities",
            Self::Steady => "steady",
            Self::MassScan => "mass_scan",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySection {
    pub checks: Vec<CheckKind>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: Option<ModelSpec>,
    pub problem: Option<ProblemSection>,
    pub sim: Option<SimSection>,
    pub output: Option<OutputSection>,
    pub verify: Option<VerifySection>,
    /// Header line of every section present.
    pub section_lines: BTreeMap<String, usize>,
    line_count: usize,
}

impl RunConfig {
    /// Checks that everything `command` needs is present.
    pub fn require(&self, command: Command) -> Result<(), ConfigErrors> {
        let mut errors = Vec::new();
        for s in command.sections() {
            if !self.section_lines.contains_key(*s) {
                errors.push(ConfigError {
                    line: self.line_count,
                    message: format!("missing section [{s}], required by `{command}`"),
                });
            }
        }
        if let Some(p) = &self.problem {
            let line = self.section_lines["problem"];
            if command == Solve && p.mass.is_none() {
                errors.push(ConfigError {
                    line,
                    message: "missing key `M` in [problem], required by `solve`".into(),
                });
            }
            if command == ScanMass && p.masses.is_none() {
                errors.push(ConfigError {
                    line,
                    message: "missing key `masses` in [problem], required by `scan-mass`".into(),
                });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errors))
        }
    }
}

/// Names of the independent random streams derived from the top-level seed.
pub const STREAMS: [&str; 3] = ["sample", "perturb", "family"];

/// Seed of stream `name`: the first eight bytes, read little-endian, of
/// `SHA-256(seed as 8 little-endian bytes ‖ name)`.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Parses and validates a configuration, then checks what `command` needs.
pub fn parse_config_for(text: &str, command: Command) -> Result<RunConfig, ConfigErrors> {
    let cfg = parse_config(text)?;
    cfg.require(command)?;
    Ok(cfg)
}

/// Parses and validates a configuration independently of any subcommand.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let lines = LineIndex::new(text);
    let (doc, syntax) = DeTable::parse_recoverable(text);
    if !syntax.is_empty() {
        let errors = syntax
            .iter()
            .map(|e| ConfigError {
                line: e.span().map_or(1, |s| lines.line(s.start)),
                message: e.message().trim().to_string(),
            })
            .collect();
        return Err(ConfigErrors(errors));
    }
    let mut errors = Vec::new();
    let mut cfg = RunConfig {
        seed: 1,
        model: None,
        problem: None,
        sim: None,
        output: None,
        verify: None,
        section_lines: BTreeMap::new(),
        line_count: lines.count(),
    };
    let mut top = Section::new("", 1, &lines);
    for (key, value) in doc.get_ref() {
        let name = key.get_ref().as_ref();
        match (value.get_ref(), SECTIONS.iter().find(|s| **s == name)) {
            (DeValue::Table(t), Some(&section)) => {
                let line = lines.line(key.span().start);
                cfg.section_lines.insert(section.to_string(), line);
                let mut s = Section::new(section, line, &lines);
                for (k, v) in t {
                    s.push(k, v);
                }
                match section {
                    "model" => cfg.model = s.model(),
                    "problem" => cfg.problem = s.problem(),
                    "sim" => cfg.sim = s.sim(),
                    "output" => cfg.output = s.output(),
                    _ => cfg.verify = s.verify(),
                }
                errors.append(&mut s.errors);
            }
            (DeValue::Table(_), None) => {
                let hint = nearest(name, SECTIONS.iter().copied());
                errors.push(ConfigError {
                    line: lines.line(key.span().start),
                    message: format!("unknown section [{name}]; did you mean [{hint}]?"),
                });
            }
            _ => top.push(key, value),
        }
    }
    if let Some(seed) = top.unsigned("seed") {
        cfg.seed = seed;
    }
    errors.append(&mut top.errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        errors.sort_by_key(|e| e.line);
        Err(ConfigErrors(errors))
    }
}

struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(text: &str) -> Self {
        let starts = std::iter::once(0)
            .chain(text.match_indices('\n').map(|(i, _)| i + 1))
            .collect();
        Self { starts }
    }

    /// 1-based line of a byte offset.
    fn line(&self, offset: usize) -> usize {
        self.starts.partition_point(|&s| s <= offset)
    }

    fn count(&self) -> usize {
        self.starts.len().max(1)
    }
}

fn nearest<'a>(name: &str, candidates: impl Iterator<Item = &'a str>) -> &'a str {
    candidates
        .min_by_key(|c| strsim::levenshtein(&name.to_lowercase(), &c.to_lowercase()))
        .unwrap_or("")
}

fn describe(v: &DeValue<'_>) -> String {
    match v {
        DeValue::String(s) => format!("string \"{s}\""),
        DeValue::Integer(i) => format!("integer {i}"),
        DeValue::Float(f) => format!("float {f}"),
        DeValue::Boolean(b) => format!("boolean {b}"),
        DeValue::Datetime(_) => "a datetime".into(),
        DeValue::Array(_) => "an array".into(),
        DeValue::Table(_) => "a table".into(),
    }
}

fn number(v: &DeValue<'_>) -> Option<f64> {
    let x = match v {
        DeValue::Integer(i) => i64::from_str_radix(i.as_str(), i.radix()).ok().map(|i| i as f64),
        DeValue::Float(f) => f.as_str().parse::<f64>().ok(),
        _ => None,
    }?;
    x.is_finite().then_some(x)
}

/// Entries of one section with typed, error-collecting accessors.
struct Section<'a> {
    name: &'static str,
    line: usize,
    lines: &'a LineIndex,
    /// `(key, line, value)`.
    entries: Vec<(String, usize, DeValue<'a>)>,
    errors: Vec<ConfigError>,
}

impl<'a> Section<'a> {
    fn new(name: &'static str, line: usize, lines: &'a LineIndex) -> Self {
        Self {
            name,
            line,
            lines,
            entries: Vec::new(),
            errors: Vec::new(),
        }
    }

    /// Adds an entry, rejecting keys this section does not know.
    fn push(&mut self, key: &Spanned<std::borrow::Cow<'_, str>>, value: &Spanned<DeValue<'a>>) {
        let name = key.get_ref().as_ref();
        let line = self.lines.line(key.span().start);
        if KEYS.iter().any(|k| k.section == self.name && k.key == name) {
            self.entries.push((name.to_string(), line, value.get_ref().clone()));
            return;
        }
        let best = KEYS
            .iter()
            .min_by_key(|k| {
                let (a, b) = (name.to_lowercase(), k.key.to_lowercase());
                let d = strsim::levenshtein(&a, &b);
                let related = a.starts_with(&b) || b.starts_with(&a);
                (d != 0, k.section != self.name, !related, d)
            })
            .expect("schema is not empty");
        let place = if self.name.is_empty() {
            "at top level".to_string()
        } else {
            format!("in [{}]", self.name)
        };
        self.error(line, format!("unknown key `{name}` {place}; did you mean `{}`?", qualified(best)));
    }

    fn error(&mut self, line: usize, message: String) {
        self.errors.push(ConfigError { line, message });
    }

    fn get(&self, key: &str) -> Option<(usize, &DeValue<'a>)> {
        self.entries.iter().find(|e| e.0 == key).map(|e| (e.1, &e.2))
    }

    fn has(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    fn line_of(&self, key: &str) -> usize {
        self.get(key).map_or(self.line, |(l, _)| l)
    }

    fn missing(&mut self, key: &str) {
        let name = self.name;
        self.error(self.line, format!("missing key `{key}` in [{name}]"));
    }

    fn mismatch(&mut self, key: &str, expected: &str) {
        if let Some((line, v)) = self.get(key) {
            let found = describe(v);
            self.error(line, format!("`{key}` expects {expected}, found {found}"));
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        let (_, v) = self.get(key)?;
        let x = number(v);
        if x.is_none() {
            self.mismatch(key, "a finite number");
        }
        x
    }

    fn count(&mut self, key: &str) -> Option<usize> {
        let (_, v) = self.get(key)?;
        let x = number(v).filter(|x| *x >= 0.0 && x.fract() == 0.0 && *x <= usize::MAX as f64);
        if x.is_none() {
            self.mismatch(key, "a nonnegative integer");
        }
        x.map(|x| x as usize)
    }

    fn unsigned(&mut self, key: &str) -> Option<u64> {
        let (_, v) = self.get(key)?;
        let x = match v {
            DeValue::Integer(i) => u64::from_str_radix(i.as_str(), i.radix()).ok(),
            _ => None,
        };
        if x.is_none() {
            self.mismatch(key, "a nonnegative integer");
        }
        x
    }

    fn string(&mut self, key: &str) -> Option<String> {
        let (_, v) = self.get(key)?;
        match v {
            DeValue::String(s) => Some(s.to_string()),
            _ => {
                self.mismatch(key, "a string");
                None
            }
        }
    }

    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        let (_, v) = self.get(key)?;
        let xs = match v {
            DeValue::Array(a) => a.iter().map(|x| number(x.get_ref())).collect::<Option<Vec<_>>>(),
            _ => None,
        };
        if xs.is_none() {
            self.mismatch(key, "an array of numbers");
        }
        xs
    }

    fn strings(&mut self, key: &str) -> Option<Vec<String>> {
        let (_, v) = self.get(key)?;
        let xs = match v {
            DeValue::Array(a) => a
                .iter()
                .map(|x| match x.get_ref() {
                    DeValue::String(s) => Some(s.to_string()),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>(),
            _ => None,
        };
        if xs.is_none() {
            self.mismatch(key, "an array of strings");
        }
        xs
    }

    /// Records `message` against `key` unless `ok`.
    fn ensure(&mut self, ok: bool, key: &str, message: impl Into<String>) -> bool {
        if !ok {
            let line = self.line_of(key);
            self.error(line, message.into());
        }
        ok
    }

    fn positive(&mut self, key: &str, default: f64) -> f64 {
        let x = self.float(key).unwrap_or(default);
        self.ensure(x > 0.0, key, format!("{key} must be positive"));
        x
    }

    fn model(&mut self) -> Option<ModelSpec> {
        let kind = self.string("kind");
        let coefficient = self.float("coefficient");
        let k = self.float("k");
        let n = self.float("n");
        let table = self.string("table");
        match kind.as_deref() {
            None if !self.has("kind") => {
                self.missing("kind");
                None
            }
            None => None,
            Some("polytrope") => {
                let c = coefficient.unwrap_or(1.0);
                self.ensure(table.is_none(), "table", "`table` applies only to kind = \"table\"");
                match (k, n, self.has("k") || self.has("n")) {
                    (Some(k), None, _) if !self.has("n") => {
                        let m = ConvexModel::polytrope_k(c, k);
                        self.check_model(m.map(|_| ()), if k > 0.0 { "coefficient" } else { "k" })?;
                        Some(ModelSpec::Phi { coefficient: c, k })
                    }
                    (None, Some(n), _) if !self.has("k") => {
                        let m = ConvexModel::polytrope(c, 1.0 + 1.0 / n);
                        self.check_model(m.map(|_| ()), if n > 0.0 { "coefficient" } else { "n" })?;
                        Some(ModelSpec::Psi { coefficient: c, n })
                    }
                    (_, _, false) => {
                        self.error(self.line, "kind = \"polytrope\" needs one of `k` or `n`".into());
                        None
                    }
                    _ => {
                        if self.has("k") && self.has("n") {
                            let line = self.line_of("n");
                            self.error(line, "`k` and `n` are exclusive".into());
                        }
                        None
                    }
                }
            }
            Some("table") => {
                for key in ["k", "n", "coefficient"] {
                    self.ensure(!self.has(key), key, format!("`{key}` applies only to kind = \"polytrope\""));
                }
                match table {
                    Some(t) if !t.is_empty() => Some(ModelSpec::PhiTable { path: PathBuf::from(t) }),
                    Some(_) => {
                        self.ensure(false, "table", "table path is empty");
                        None
                    }
                    None if !self.has("table") => {
                        self.missing("table");
                        None
                    }
                    None => None,
                }
            }
            Some(other) => {
                let hint = nearest(other, ["polytrope", "table"].into_iter());
                self.ensure(false, "kind", format!("unknown model kind \"{other}\"; did you mean \"{hint}\"?"));
                None
            }
        }
    }

    fn check_model(&mut self, result: flatgrav_core::Result<()>, key: &str) -> Option<()> {
        match result {
            Ok(()) => Some(()),
            Err(e) => {
                let line = self.line_of(key);
                self.error(line, e.to_string());
                None
            }
        }
    }

    fn problem(&mut self) -> Option<ProblemSection> {
        let d = SolverConfig::default();
        let mass = self.float("M");
        if let Some(m) = mass {
            self.ensure(m > 0.0, "M", "M must be positive");
        }
        let masses = self.floats("masses");
        if let Some(ms) = &masses {
            let ok = !ms.is_empty() && ms.iter().all(|m| *m > 0.0) && ms.windows(2).all(|w| w[1] > w[0]);
            self.ensure(ok, "masses", "masses must be a nonempty, positive, strictly increasing list");
        }
        let theta = self.float("theta").unwrap_or(d.theta);
        self.ensure(theta > 0.0 && theta <= 1.0, "theta", "theta must lie in (0, 1]");
        let tol = self.positive("tol", d.tol);
        let el_tol = self.positive("el_tol", d.el_tol);
        let max_iter = self.count("max_iter").unwrap_or(d.max_iter);
        self.ensure(max_iter > 0, "max_iter", "max_iter must be positive");
        let grid_points = self.count("grid_points").unwrap_or(d.grid_points);
        self.ensure(
            grid_points >= MIN_RADIAL_NODES,
            "grid_points",
            format!("grid_points must be at least {MIN_RADIAL_NODES}"),
        );
        let inner = self.positive("span_inner", d.grid_span.0);
        let outer = self.float("span_outer").unwrap_or(d.grid_span.1);
        self.ensure(outer > inner, "span_outer", "span_outer must exceed span_inner");
        Some(ProblemSection {
            mass,
            masses,
            solver: SolverConfig {
                theta,
                tol,
                el_tol,
                max_iter,
                grid_points,
                grid_span: (inner, outer),
                ..d
            },
        })
    }

    fn sim(&mut self) -> Option<SimSection> {
        let d = SimConfig::default();
        let np = self.count("np").unwrap_or(d.np);
        self.ensure(np > 0, "np", "np must be positive");
        let dt = self.float("dt").unwrap_or(d.dt);
        self.ensure(dt > 0.0 && dt <= MAX_DT, "dt", format!("dt must lie in (0, {MAX_DT}]"));
        let t_end = self.positive("t_end", d.t_end);
        let n = self.count("n").unwrap_or(d.n);
        self.ensure(n.is_power_of_two() && n >= 16, "n", "n must be a power of two, at least 16");
        let box_factor = self.float("box_factor").unwrap_or(d.box_factor);
        self.ensure(box_factor > 2.0, "box_factor", "box_factor must exceed 2");
        let drift_tolerance = self.positive("drift_tolerance", d.drift_tolerance);
        let perturbation = match self.string("perturbation").as_deref() {
            None | Some("none") => PerturbationKind::None,
            Some("boost") => PerturbationKind::Boost,
            Some("scale") => PerturbationKind::Scale,
            Some("noise") => PerturbationKind::Noise,
            Some(other) => {
                let hint = nearest(other, ["none", "boost", "scale", "noise"].into_iter());
                self.ensure(false, "perturbation", format!("unknown perturbation \"{other}\"; did you mean \"{hint}\"?"));
                PerturbationKind::None
            }
        };
        let amplitude = self.float("amplitude").unwrap_or(match perturbation {
            PerturbationKind::Boost => 0.05,
            _ => 0.01,
        });
        match perturbation {
            PerturbationKind::Scale => {
                self.ensure(amplitude > -1.0, "amplitude", "scale amplitude must exceed -1");
            }
            PerturbationKind::Noise => {
                self.ensure(amplitude >= 0.0, "amplitude", "noise amplitude must be nonnegative");
            }
            _ => {}
        }
        Some(SimSection {
            np,
            dt,
            t_end,
            n,
            box_factor,
            perturbation,
            amplitude,
            drift_tolerance,
        })
    }

    fn output(&mut self) -> Option<OutputSection> {
        let directory = self.string("directory");
        if directory.is_none() && !self.has("directory") {
            self.missing("directory");
        }
        if let Some(d) = &directory {
            self.ensure(!d.is_empty(), "directory", "directory must not be empty");
        }
        let diag_every = self.positive("diag_every", 0.5);
        let snapshot_every = self.float("snapshot_every");
        if let Some(s) = snapshot_every {
            self.ensure(s > 0.0, "snapshot_every", "snapshot_every must be positive");
        }
        Some(OutputSection {
            directory: PathBuf::from(directory?),
            diag_every,
            snapshot_every,
        })
    }

    fn verify(&mut self) -> Option<VerifySection> {
        let mut checks = Vec::new();
        match self.strings("checks") {
            Some(names) => {
                for name in names {
                    match CheckKind::ALL.into_iter().find(|c| c.name() == name) {
                        Some(c) if !checks.contains(&c) => checks.push(c),
                        Some(_) => {}
                        None => {
                            let hint = nearest(&name, CheckKind::ALL.iter().map(|c| c.name()));
                            self.ensure(false, "checks", format!("unknown check \"{name}\"; did you mean \"{hint}\"?"));
                        }
                    }
                }
                checks.sort();
            }
            None => checks = CheckKind::ALL.to_vec(),
        }
        let tolerance = self.float("tolerance");
        if let Some(t) = tolerance {
            self.ensure(t > 0.0, "tolerance", "tolerance must be positive");
        }
        Some(VerifySection { checks, tolerance })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = "[model]\nkind = \"polytrope\"\nk = 0.5\n\n[problem]\nM = 1\n\n[output]\ndirectory = \"out\"\n";

    fn errors(text: &str) -> Vec<ConfigError> {
        parse_config(text).unwrap_err().0
    }

    #[test]
    fn minimal_solve_config_gets_defaults() {
        let cfg = parse_config_for(SOLVE, Command::Solve).unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.model, Some(ModelSpec::Phi { coefficient: 1.0, k: 0.5 }));
        let p = cfg.problem.unwrap();
        assert_eq!(p.mass, Some(1.0));
        assert_eq!(p.solver, SolverConfig::default());
        assert_eq!(cfg.output.unwrap().directory, PathBuf::from("out"));
    }

    #[test]
    fn negative_mass_is_rejected_with_its_line() {
        let e = errors(&SOLVE.replace("M = 1", "M = -1"));
        assert_eq!(e, vec![ConfigError { line: 6, message: "M must be positive".into() }]);
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let e = errors(&SOLVE.replace("M = 1", "M = 1\ntheat = 0.3"));
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].line, 7);
        assert!(e[0].message.contains("did you mean `[problem] theta`"), "{}", e[0]);
        let e = errors(&SOLVE.replace("k = 0.5", "k = 0.5\ngamma = 2"));
        assert!(e[0].message.starts_with("unknown key `gamma` in [model]; did you mean"), "{}", e[0]);
    }

    #[test]
    fn all_errors_are_reported() {
        let text = "seed = -3\nfoo = 1\n[model]\nkind = \"polytope\"\n[problem]\nM = \"one\"\ntheta = 2\n[sim]\nn = 100\n[outptu]\n";
        let e = errors(text);
        let lines: Vec<usize> = e.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![1, 2, 4, 6, 7, 9, 10], "{}", ConfigErrors(e.clone()));
        assert!(e[2].message.contains("did you mean \"polytrope\""));
        assert!(e[3].message.contains("expects a finite number, found string"));
        assert!(e[6].message.contains("did you mean [output]"));
    }

    #[test]
    fn missing_pieces_are_named() {
        let e = errors("[model]\nk = 0.5\n[output]\n");
        assert_eq!(e[0], ConfigError { line: 1, message: "missing key `kind` in [model]".into() });
        assert_eq!(e[1], ConfigError { line: 3, message: "missing key `directory` in [output]".into() });
        let cfg = parse_config("[model]\nkind = \"polytrope\"\nk = 1\n[output]\ndirectory = \"o\"\n").unwrap();
        let e = cfg.require(Command::Solve).unwrap_err().0;
        assert!(e[0].message.contains("missing section [problem]"));
        let e = parse_config_for("[model]\nkind = \"polytrope\"\nk = 1\n[problem]\n[output]\ndirectory = \"o\"\n", Command::ScanMass)
            .unwrap_err()
            .0;
        assert_eq!(e[0].line, 4);
        assert!(e[0].message.contains("`masses`"));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let e = errors("[model]\nkind = \"polytrope\nk = 1\n");
        assert_eq!(e[0].line, 2);
    }

    #[test]
    fn model_variants() {
        let cfg = parse_config("[model]\nkind = \"table\"\ntable = \"phi.csv\"\n").unwrap();
        assert_eq!(cfg.model, Some(ModelSpec::PhiTable { path: "phi.csv".into() }));
        let cfg = parse_config("[model]\nkind = \"polytrope\"\nn = 1.5\ncoefficient = 0.4\n").unwrap();
        assert_eq!(cfg.model, Some(ModelSpec::Psi { coefficient: 0.4, n: 1.5 }));
        assert!(parse_config("[model]\nkind = \"polytrope\"\nk = 1\nn = 2\n").is_err());
        assert!(parse_config("[model]\nkind = \"polytrope\"\nk = 0\n").is_err());
        assert!(parse_config("[model]\nkind = \"table\"\ntable = \"t\"\nk = 1\n").is_err());
    }

    #[test]
    fn integers_accept_float_notation() {
        let cfg = parse_config("[sim]\nnp = 2e5\nperturbation = \"boost\"\n").unwrap();
        let s = cfg.sim.unwrap();
        assert_eq!(s.np, 200_000);
        assert_eq!(s.amplitude, 0.05);
        assert!(parse_config("[sim]\nnp = 2.5\n").is_err());
    }

    #[test]
    fn verify_checks_are_parsed() {
        let cfg = parse_config("[verify]\nchecks = [\"scaling\", \"reduction\"]\ntolerance = 1e-12\n").unwrap();
        let v = cfg.verify.unwrap();
        assert_eq!(v.checks, vec![CheckKind::Reduction, CheckKind::Scaling]);
        assert_eq!(v.tolerance, Some(1e-12));
        let e = errors("[verify]\nchecks = [\"scalng\"]\n");
        assert!(e[0].message.contains("did you mean \"scaling\""));
    }

    #[test]
    fn stream_seeds_differ_and_are_stable() {
        let a: Vec<u64> = STREAMS.iter().map(|s| stream_seed(1, s)).collect();
        assert_ne!(a[0], a[1]);
        assert_ne!(a[1], a[2]);
        assert_ne!(stream_seed(1, "sample"), stream_seed(2, "sample"));
        assert_eq!(a, STREAMS.iter().map(|s| stream_seed(1, s)).collect::<Vec<_>>());
    }

    #[test]
    fn every_key_has_a_reader() {
        for c in Command::ALL {
            assert!(keys_for(c).count() >= 3, "{c}");
        }
        let mut seen = std::collections::HashSet::new();
        for k in KEYS {
            assert!(seen.insert((k.section, k.key)), "duplicate {}", qualified(k));
            assert!(k.section.is_empty() || SECTIONS.contains(&k.section));
        }
    }
}
