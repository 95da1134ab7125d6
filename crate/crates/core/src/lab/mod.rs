//! Scenario runner: sample the target, solve the semi-discrete problem, run
//! the configured diagnostics and compare them with the expectations.

mod builtin;
mod diagnostics;
mod scenario;

pub use builtin::{builtin, builtin_named, BUILTIN_NAMES};
pub use scenario::{
    AngleExpectation, BasePointSpec, DiagnosticSpec, Expected, ParamOverrides, PolygonSpec, Resolved,
    SamplingSpec, Scenario, SlopeExpectation,
};

use crate::cones::ConesError;
use crate::convex2d::GeomError;
use crate::measures::{integrate, MeasureError, Quadrature};
use crate::regularity::RegularityError;
use crate::sdot::{sample_target, solve, SamplingOptions, SdotError, SolveOptions, SolverMeta, TransportPlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Sdot(#[from] SdotError),
    #[error(transparent)]
    Regularity(#[from] RegularityError),
    #[error(transparent)]
    Cones(#[from] ConesError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

impl LabError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    Fail,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticOutput {
    /// Diagnostic name, with a suffix for secondary payloads.
    pub diagnostic: String,
    pub base_point: usize,
    pub x0: [f64; 2],
    pub csv: String,
    pub summary: serde_json::Value,
    pub error: Option<String>,
}

impl DiagnosticOutput {
    /// File name of the CSV payload.
    pub fn file_name(&self) -> String {
        format!("{}_bp{}.csv", self.diagnostic, self.base_point)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub base_point: Option<usize>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    /// SHA-256 of the effective scenario and the crate version.
    pub scenario_hash: String,
    pub version: String,
    pub seed: u64,
    pub status: Status,
    pub error: Option<String>,
    /// Factor applied to the target masses so they match the source mass.
    pub mass_rescale: Option<f64>,
    pub solver: Option<SolverMeta>,
    pub sites: usize,
    pub outputs: Vec<DiagnosticOutput>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Replaces the scenario's seed.
    pub seed: Option<u64>,
    /// Replaces the χ slack of the scenario and of every diagnostic.
    pub slack: Option<f64>,
}

/// Outcome of one scenario: the report, the effective scenario and the plan
/// when the solve succeeded.
#[derive(Clone, Debug)]
pub struct Run {
    pub report: Report,
    pub scenario: Scenario,
    pub plan: Option<TransportPlan>,
}

/// The scenario with the run options applied.
pub fn effective(scenario: &Scenario, opts: &RunOptions) -> Scenario {
    let mut s = scenario.clone();
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    if let Some(slack) = opts.slack {
        s.params.slack = slack;
        for d in &mut s.diagnostics {
            if let DiagnosticSpec::Chi { params, .. } = d {
                params.slack = None;
            }
        }
    }
    s
}

pub fn scenario_hash(s: &Scenario) -> String {
    let doc = serde_json::to_string(&serde_json::json!({ "scenario": s, "version": VERSION }))
        .expect("scenario serializes");
    let digest = Sha256::digest(doc.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn build_report(s: &Scenario, hash: String) -> Report {
    Report {
        scenario: s.name.clone(),
        scenario_hash: hash,
        version: VERSION.to_string(),
        seed: s.seed,
        status: Status::Fail,
        error: None,
        mass_rescale: None,
        solver: None,
        sites: s.sites,
        outputs: Vec::new(),
        checks: Vec::new(),
    }
}

fn finish(report: &mut Report) {
    let ok = report.error.is_none() && report.checks.iter().all(|c| c.passed);
    report.status = if ok { Status::Pass } else { Status::Fail };
}

fn solve_scenario(s: &Scenario, res: &Resolved) -> Result<(TransportPlan, f64), LabError> {
    let q = Quadrature::default();
    let opts = SamplingOptions {
        lloyd_iters: s.sampling.lloyd_iters,
        pin_origin: res.pin_origin,
        boundary_sites: s.sampling.boundary_sites,
    };
    let mut cloud = sample_target(&res.target, &res.target_density, s.sites, s.seed, &opts)?;
    let mu = integrate(&res.source_density, &res.source, &q)?;
    let nu: f64 = cloud.masses.iter().sum();
    let rescale = mu / nu;
    for m in &mut cloud.masses {
        *m *= rescale;
    }
    cloud.total_mass = cloud.masses.iter().sum();
    let mut plan = solve(&res.source, &res.source_density, &cloud, None, &SolveOptions::default())?;
    plan.meta.seed = Some(s.seed);
    Ok((plan, rescale))
}

/// Samples, solves and runs every diagnostic. Configuration errors are
/// returned; solver and diagnostic failures end up in a FAIL report.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Run, LabError> {
    let s = effective(scenario, opts);
    let res = s.resolve()?;
    let hash = scenario_hash(&s);
    let mut report = build_report(&s, hash.clone());
    let plan = match solve_scenario(&s, &res) {
        Ok((plan, rescale)) => {
            report.mass_rescale = Some(rescale);
            report.solver = Some(plan.meta.clone());
            let (outputs, checks) = diagnostics::run_all(&s, &res, &plan, None, &hash);
            report.outputs = outputs;
            report.checks = checks;
            Some(plan)
        }
        Err(e) => {
            report.error = Some(e.to_string());
            None
        }
    };
    finish(&mut report);
    Ok(Run {
        report,
        scenario: s,
        plan,
    })
}

/// Reruns diagnostics on a stored plan; `diagnostic` restricts to one
/// diagnostic by name.
pub fn replay(plan: &TransportPlan, scenario: &Scenario, diagnostic: Option<&str>) -> Result<Report, LabError> {
    if let Some(d) = diagnostic {
        if !scenario.diagnostics.iter().any(|x| x.name() == d) {
            let names: Vec<&str> = scenario.diagnostics.iter().map(|x| x.name()).collect();
            return Err(LabError::Usage(format!(
                "scenario '{}' has no diagnostic '{d}' (available: {})",
                scenario.name,
                names.join(", ")
            )));
        }
    }
    let res = scenario.resolve()?;
    let hash = scenario_hash(scenario);
    let mut report = build_report(scenario, hash.clone());
    report.solver = Some(plan.meta.clone());
    let (outputs, checks) = diagnostics::run_all(scenario, &res, plan, diagnostic, &hash);
    report.outputs = outputs;
    report.checks = checks;
    finish(&mut report);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub scenario: String,
    pub scenario_hash: String,
    pub status: Status,
    pub error: Option<String>,
    pub failed_checks: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub status: Status,
    pub passed: usize,
    pub failed: usize,
    pub scenarios: Vec<SummaryEntry>,
}

impl Summary {
    pub fn of(runs: &[Run]) -> Self {
        let scenarios: Vec<SummaryEntry> = runs
            .iter()
            .map(|r| SummaryEntry {
                scenario: r.report.scenario.clone(),
                scenario_hash: r.report.scenario_hash.clone(),
                status: r.report.status,
                error: r.report.error.clone(),
                failed_checks: r
                    .report
                    .failed_checks()
                    .map(|c| match c.base_point {
                        Some(b) => format!("{} (base point {b}): {}", c.name, c.detail),
                        None => format!("{}: {}", c.name, c.detail),
                    })
                    .collect(),
            })
            .collect();
        let passed = scenarios.iter().filter(|e| e.status == Status::Pass).count();
        Summary {
            version: VERSION.to_string(),
            status: if passed == scenarios.len() { Status::Pass } else { Status::Fail },
            passed,
            failed: scenarios.len() - passed,
            scenarios,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }
}

/// Runs independent scenarios on a pool of `jobs` threads; the runs come
/// back in input order.
pub fn suite(scenarios: &[Scenario], opts: &RunOptions, jobs: usize) -> Result<Vec<Run>, LabError> {
    if scenarios.is_empty() {
        return Err(LabError::Usage("the suite needs at least one scenario".into()));
    }
    let mut names = HashSet::new();
    for s in scenarios {
        if !names.insert(s.name.as_str()) {
            return Err(LabError::Config(format!("duplicate scenario name '{}'", s.name)));
        }
        effective(s, opts).resolve()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| LabError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| scenarios.par_iter().map(|s| run(s, opts)).collect())
}

pub fn read_scenario(path: &Path) -> Result<Scenario, LabError> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    Scenario::from_toml(&text).map_err(|e| match e {
        LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Every `*.toml` file of a directory, sorted by file name.
pub fn read_scenario_dir(dir: &Path) -> Result<Vec<Scenario>, LabError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| LabError::io(dir, e))? {
        let p = entry.map_err(|e| LabError::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "toml") {
            paths.push(p);
        }
    }
    paths.sort();
    paths.iter().map(|p| read_scenario(p)).collect()
}

fn write(path: &Path, text: &str) -> Result<(), LabError> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Writes `<out>/<name>/`: `report.json`, one CSV per diagnostic and base
/// point, the effective `scenario.toml` and, when solved, `plan.json`.
pub fn write_run(run: &Run, out: &Path) -> Result<PathBuf, LabError> {
    let dir = out.join(&run.report.scenario);
    fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    write(&dir.join("report.json"), &run.report.to_json())?;
    write(&dir.join("scenario.toml"), &run.scenario.to_toml()?)?;
    write_csvs(&run.report, &dir)?;
    if let Some(plan) = &run.plan {
        let p = dir.join("plan.json");
        plan.save(&p)?;
    }
    Ok(dir)
}

pub fn write_csvs(report: &Report, dir: &Path) -> Result<(), LabError> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    for o in report.outputs.iter().filter(|o| o.error.is_none()) {
        write(&dir.join(o.file_name()), &o.csv)?;
    }
    Ok(())
}

pub fn write_summary(summary: &Summary, out: &Path) -> Result<(), LabError> {
    fs::create_dir_all(out).map_err(|e| LabError::io(out, e))?;
    write(&out.join("summary.json"), &summary.to_json())
}

#[cfg(test)]
mod tests;
