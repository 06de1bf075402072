//! Config-driven runs: `check`, `simulate`, `verify` and `patterns`.
//!
//! Numerics come from a single JSON file with a strict schema; any unknown
//! key is rejected. Reports are written with [`crate::json`] so identical
//! configs give byte-identical output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evolution::{
    bound_check_for, causality_test, discretize_law, solve, Causality, EvolutionProblem, Forcing, ForcingBlock,
    ForcingSource, ForcingTerm, Scheme, SpatialProfile, TemporalShape, Trajectory, BOUND_SLACK,
};
use crate::json;
use crate::material::{assemble_material_law, CoefValue, Family, MaterialLaw, ModelSpec};
use crate::oracle::{compare, spectral_solve_with, ORACLE_SUBSTEPS};
use crate::spatial::{build_operators, Grid1D};
use crate::wellposedness::{check_theorem_2_with, CheckOptions, Verdict, WellPosednessReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_VIOLATED: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Check,
    Simulate,
    Verify,
    Patterns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub coefficients: BTreeMap<String, CoefValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub length: f64,
    pub n_cells: usize,
}

fn default_scheme() -> Scheme {
    Scheme::BackwardEuler
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_max: f64,
    pub dt: f64,
    /// Chosen from the certificate when absent.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    GaussianPulse,
    DelayedStep,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub kind: PulseKind,
    #[serde(default)]
    pub center: Option<f64>,
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub delay: Option<f64>,
    pub block: ForcingBlock,
    pub spatial_profile: String,
    #[serde(default = "one")]
    pub amplitude: f64,
}

impl ForcingConfig {
    pub fn to_term(&self) -> Result<ForcingTerm> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("{:?} forcing needs '{name}'", self.kind)))
        };
        let shape = match self.kind {
            PulseKind::GaussianPulse => {
                if self.delay.is_some() {
                    return Err(Error::Config("gaussian_pulse takes center and width, not delay".into()));
                }
                TemporalShape::GaussianPulse { center: need(self.center, "center")?, width: need(self.width, "width")? }
            }
            PulseKind::DelayedStep => {
                if self.center.is_some() {
                    return Err(Error::Config("delayed_step takes delay and width, not center".into()));
                }
                TemporalShape::DelayedStep { delay: need(self.delay, "delay")?, width: self.width.unwrap_or(0.0) }
            }
        };
        shape.validate()?;
        Ok(ForcingTerm {
            block: self.block,
            profile: SpatialProfile::parse(&self.spatial_profile)?,
            shape,
            amplitude: self.amplitude,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    pub fn items(&self) -> Vec<&T> {
        match self {
            Self::One(t) => vec![t],
            Self::Many(v) => v.iter().collect(),
        }
    }
}

fn default_oracle_error() -> f64 {
    1e-2
}
fn default_bound_slack() -> f64 {
    BOUND_SLACK
}
fn default_substeps() -> usize {
    ORACLE_SUBSTEPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Overall relative weighted L² error against the oracle.
    #[serde(default = "default_oracle_error")]
    pub oracle_error: f64,
    #[serde(default = "default_bound_slack")]
    pub bound_slack: f64,
    /// Largest accepted response before the forcing starts.
    #[serde(default)]
    pub causality_leakage: f64,
    #[serde(default = "default_substeps")]
    pub oracle_substeps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            oracle_error: default_oracle_error(),
            bound_slack: default_bound_slack(),
            causality_leakage: 0.0,
            oracle_substeps: default_substeps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub time: Option<TimeConfig>,
    #[serde(default)]
    pub forcing: Option<OneOrMany<ForcingConfig>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate_numbers()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate_numbers(&self) -> Result<()> {
        let mut nums = Vec::new();
        if let Some(g) = &self.grid {
            nums.push(("grid.L", g.length));
        }
        if let Some(t) = &self.time {
            nums.extend([("time.t_max", t.t_max), ("time.dt", t.dt)]);
            if let Some(r) = t.rho {
                nums.push(("time.rho", r));
            }
        }
        let tol = &self.tolerances;
        nums.extend([
            ("tolerances.oracle_error", tol.oracle_error),
            ("tolerances.bound_slack", tol.bound_slack),
            ("tolerances.causality_leakage", tol.causality_leakage),
        ]);
        for (name, v) in nums {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    fn section<'a, T>(value: &'a Option<T>, name: &str, mode: Mode) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| Error::Config(format!("mode {mode:?} needs a '{name}' section")))
    }

    pub fn model_spec(&self, mode: Mode) -> Result<ModelSpec> {
        let m = Self::section(&self.model, "model", mode)?;
        let spec = ModelSpec::new(m.family, m.coefficients.clone())?;
        match &self.grid {
            Some(g) => spec.with_cells(g.n_cells),
            None => Ok(spec),
        }
    }

    pub fn forcing(&self) -> Result<Forcing> {
        match &self.forcing {
            None => Ok(Forcing::default()),
            Some(f) => Forcing::new(f.items().into_iter().map(ForcingConfig::to_term).collect::<Result<_>>()?),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub mode: Mode,
    pub config: Option<PathBuf>,
    pub all: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
    pub files: Vec<PathBuf>,
}

/// Runs one invocation; input errors map to exit status 1.
pub fn run(inv: &Invocation) -> Outcome {
    let mut out = Outcome { status: EXIT_OK, stdout: String::new(), stderr: String::new(), files: Vec::new() };
    if let Err(e) = run_inner(inv, &mut out) {
        out.status = EXIT_INPUT;
        out.stderr.push_str(&format!("error: {e}\n"));
    }
    out
}

fn run_inner(inv: &Invocation, out: &mut Outcome) -> Result<()> {
    let (cfg, raw) = match &inv.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let cfg = RunConfig::parse(&text)?;
            let raw: Value = serde_json::from_str(&text)?;
            (Some(cfg), raw)
        }
        None => (None, Value::Null),
    };
    if let Some(m) = cfg.as_ref().and_then(|c| c.mode) {
        if m != inv.mode {
            return Err(Error::Config(format!("config is for mode {m:?}, invoked as {:?}", inv.mode)));
        }
    }
    let out_dir = inv.out.clone().or_else(|| cfg.as_ref().and_then(|c| c.output.clone()));
    if inv.mode == Mode::Patterns {
        return patterns(inv, cfg.as_ref(), out_dir.as_deref(), out);
    }
    let cfg = cfg.ok_or_else(|| Error::Config(format!("mode {:?} needs --config", inv.mode)))?;
    match inv.mode {
        Mode::Check => check(&cfg, out_dir.as_deref(), out),
        Mode::Simulate | Mode::Verify => {
            let dir = out_dir.ok_or_else(|| Error::Config("simulate and verify need --out or 'output'".into()))?;
            simulate(inv.mode, &cfg, &raw, &dir, out)
        }
        Mode::Patterns => unreachable!(),
    }
}

fn write_file(path: PathBuf, text: &str, out: &mut Outcome) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, text)?;
    out.files.push(path);
    Ok(())
}

pub fn all_patterns() -> Result<String> {
    let tables: Vec<String> = Family::CATALOG
        .iter()
        .map(|&f| assemble_material_law(&ModelSpec::representative(f)).map(|l| l.pattern_table()))
        .collect::<Result<_>>()?;
    Ok(tables.join("\n"))
}

fn patterns(inv: &Invocation, cfg: Option<&RunConfig>, dir: Option<&Path>, out: &mut Outcome) -> Result<()> {
    let text = if inv.all {
        all_patterns()?
    } else {
        let cfg = cfg.ok_or_else(|| Error::Config("patterns needs --config or --all".into()))?;
        assemble_material_law(&cfg.model_spec(Mode::Patterns)?)?.pattern_table()
    };
    out.stdout.push_str(&text);
    if let Some(d) = dir {
        write_file(d.join("patterns.txt"), &text, out)?;
    }
    Ok(())
}

fn certify(cfg: &RunConfig, mode: Mode) -> Result<(MaterialLaw, WellPosednessReport)> {
    let law = assemble_material_law(&cfg.model_spec(mode)?)?;
    let opts = CheckOptions { rho: cfg.time.and_then(|t| t.rho), ..CheckOptions::default() };
    let report = check_theorem_2_with(&law, &opts);
    Ok((law, report))
}

fn check(cfg: &RunConfig, dir: Option<&Path>, out: &mut Outcome) -> Result<()> {
    let (_, report) = certify(cfg, Mode::Check)?;
    let text = json::to_string(&report)?;
    out.stdout.push_str(&text);
    if let Some(d) = dir {
        write_file(d.join("report.json"), &text, out)?;
    }
    if report.verdict == Verdict::Violated {
        out.status = EXIT_VIOLATED;
    }
    Ok(())
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn simulate(mode: Mode, cfg: &RunConfig, raw: &Value, dir: &Path, out: &mut Outcome) -> Result<()> {
    let (law, report) = certify(cfg, mode)?;
    let g = RunConfig::section(&cfg.grid, "grid", mode)?;
    let t = RunConfig::section(&cfg.time, "time", mode)?;
    let grid = Grid1D::new(g.length, g.n_cells)?;
    if law.n_cells() != grid.n_cells() {
        return Err(Error::Config(format!("model has {} cells, grid has {}", law.n_cells(), grid.n_cells())));
    }
    let rho = match t.rho {
        Some(r) => r,
        None if report.rho_eval.is_finite() => report.rho_eval,
        None => 1.0,
    };
    let op = build_operators(&grid)?;
    let problem = EvolutionProblem::new(
        law.clone(),
        op.clone(),
        ForcingSource::Analytic(cfg.forcing()?),
        t.t_max,
        t.dt,
        t.scheme,
        rho,
    )?;
    let traj = solve(&problem)?;
    let dlaw = discretize_law(&law, &grid)?;
    fs::create_dir_all(dir)?;
    for name in traj.write_csvs(dir, &op, &dlaw)? {
        out.files.push(dir.join(name));
    }
    let manifest = json!({
        "config": raw,
        "mode": mode,
        "family": law.family.name(),
        "verdict": report.verdict,
        "c_estimate": finite_or_null(report.c_estimate),
        "rho_min": finite_or_null(report.rho_min),
        "rho": rho,
        "steps": problem.steps(),
    });
    write_file(dir.join("manifest.json"), &json::to_string_value(&manifest), out)?;
    out.stdout.push_str(&format!("{} steps written to {}\n", problem.steps(), dir.display()));
    if mode == Mode::Verify {
        verify(cfg, &problem, &traj, &report, dir, out)?;
    }
    Ok(())
}

fn verify(
    cfg: &RunConfig,
    problem: &EvolutionProblem,
    traj: &Trajectory,
    report: &WellPosednessReport,
    dir: &Path,
    out: &mut Outcome,
) -> Result<()> {
    let tol = cfg.tolerances;
    let mut passed = true;

    let comparison = match spectral_solve_with(problem, tol.oracle_substeps) {
        Ok(reference) => {
            let c = compare(traj, &reference)?;
            let ok = c.overall <= tol.oracle_error;
            passed &= ok;
            let fields: serde_json::Map<String, Value> =
                c.fields.iter().map(|(k, v)| (k.clone(), finite_or_null(*v))).collect();
            json!({"fields": fields, "overall": finite_or_null(c.overall), "tolerance": tol.oracle_error, "passed": ok})
        }
        Err(Error::OracleUnsupported(why)) => json!({"skipped": why}),
        Err(e) => return Err(e),
    };
    write_file(dir.join("comparison.json"), &json::to_string_value(&comparison), out)?;

    let t0 = match &problem.forcing {
        ForcingSource::Analytic(f) if !f.terms.is_empty() => f.support().0,
        _ => 0.0,
    };
    let causality = match causality_test(problem, t0)? {
        Causality::Leakage(l) => {
            let ok = l <= tol.causality_leakage;
            passed &= ok;
            json!({"t0": t0, "leakage": l, "tolerance": tol.causality_leakage, "passed": ok})
        }
        Causality::Skipped(why) => json!({"t0": t0, "skipped": why}),
    };

    let bound = if report.verdict != Verdict::Satisfied {
        json!({"skipped": format!("verdict is {:?}", report.verdict)})
    } else {
        match bound_check_for(problem, traj, report) {
            Ok(b) => {
                let ok = b.holds(tol.bound_slack);
                passed &= ok;
                json!({"lhs": b.lhs, "rhs": b.rhs, "c_estimate": b.c, "slack": tol.bound_slack, "passed": ok})
            }
            Err(e @ (Error::WindowTooShort { .. } | Error::InvalidInput(_))) => json!({"skipped": e.to_string()}),
            Err(e) => return Err(e),
        }
    };

    let summary = json!({
        "comparison": comparison,
        "causality": causality,
        "bound": bound,
        "report": report.to_json_value(),
        "passed": passed,
    });
    let text = json::to_string_value(&summary);
    write_file(dir.join("verify.json"), &text, out)?;
    out.stdout.push_str(&text);
    if !passed {
        out.status = EXIT_TOLERANCE;
    }
    Ok(())
}
