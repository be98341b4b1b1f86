//! Command-line front end: parse a problem document, run one analysis and
//! emit a report.

pub mod report;
pub mod problem;

use std::time::Instant;

use clap::{Parser, Subcommand};
use steplen::dynsys::{simulate, step_matrix, EulerMap, LinearSystem, Method};
use steplen::invariance::{
    continuous_ellipsoid, continuous_lorenz_necessary, continuous_polyhedron, cross_positive_polyhedral,
    discrete_ellipsoid, discrete_lorenz, discrete_polyhedron, Outcome, Verdict,
};
use steplen::oracle::{empirical_threshold_with, sample_verify, EmpiricalRequest};
use steplen::real::Real;
use steplen::sets::{validate_set, PolyhedronPair, SetSpec};
use steplen::thresholds::{
    backward_euler_uniform, default_dt_max, forward_euler_uniform_polyhedron, local_backward_euler, optimal_uniform,
};
use thiserror::Error;

pub use report::{emit_report, Format, Report, Status};
pub use problem::{parse_spec, Overrides, ProblemSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("cannot read input: {0}")]
    Io(String),
    #[error(transparent)]
    Analysis(#[from] steplen::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use steplen::Error as E;
        match self {
            CliError::Parse(_) | CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Analysis(e) => match e {
                E::NotFlowInvariant(_) | E::PredicateFalseAtZero => 1,
                E::NoConvergence
                | E::Overflow
                | E::SingularShift { .. }
                | E::SamplingExhausted { .. }
                | E::BranchPreconditionFailed(_) => 3,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Validate the set description
    Validate,
    /// Continuous invariance, plus one-step invariance when a steplength is given
    Check,
    /// Local, certified, optimal and (with --samples) empirical steplength thresholds
    Threshold,
    /// Iterate the discrete system from `point`
    Simulate,
    /// Sample the set and count points leaving it after one step
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Check => "check",
            Command::Threshold => "threshold",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "steplen", version, about = "Invariance-preserving steplength thresholds for Euler methods")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Problem document (JSON); read from stdin when absent
    #[arg(long, global = true)]
    pub input: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value = "json", global = true)]
    pub format: Format,
    #[arg(long, global = true, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Membership and definiteness tolerance
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Bisection bracket width for optimal thresholds
    #[arg(long = "tol-dt", global = true)]
    pub tol_dt: Option<f64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Starting or evaluation point, comma separated
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub point: Option<Vec<f64>>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            method: self.method,
            tol: self.tol,
            tol_dt: self.tol_dt,
            samples: self.samples,
            seed: self.seed,
            dt: self.dt,
            steps: self.steps,
            point: self.point.clone(),
        }
    }
}

fn new_report(spec: &ProblemSpec, command: Command) -> Report {
    Report {
        schema_version: report::SCHEMA_VERSION,
        tool: "steplen".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        problem: report::ProblemEcho {
            example: spec.example.clone(),
            dim: spec.set.dim(),
            set_kind: spec.set.kind().into(),
            method: spec.method.to_string(),
            dt: spec.dt.map(Real),
            steps: spec.steps,
            samples: spec.samples,
            assume_invariant: spec.assume_invariant,
        },
        tol: spec.tol,
        tol_dt: spec.tol_dt,
        seed: spec.seed,
        status: Status::Ok,
        validation: None,
        verdicts: Vec::new(),
        thresholds: Vec::new(),
        trajectory: None,
        verification: None,
        notes: Vec::new(),
        timing_ms: 0.0,
    }
}

fn continuous_verdict(spec: &ProblemSpec, samples: usize) -> steplen::Result<Option<Verdict>> {
    let (a, tol) = (&spec.a, spec.tol);
    Ok(Some(match &spec.set {
        SetSpec::Ellipsoid(e) => continuous_ellipsoid(a, e, tol)?,
        SetSpec::PolyhedronPair(p) => continuous_polyhedron(a, p, tol)?,
        SetSpec::PolyhedralCone(c) => cross_positive_polyhedral(a, c, tol)?,
        SetSpec::LorenzCone(c) => continuous_lorenz_necessary(a, c, samples, spec.seed, tol)?,
        SetSpec::HPolyhedron(_) | SetSpec::VPolyhedron(_) => return Ok(None),
    }))
}

fn discrete_verdict(spec: &ProblemSpec, dt: f64) -> steplen::Result<Option<Verdict>> {
    let m = step_matrix(&LinearSystem::new(spec.a.clone())?, spec.method, dt)?;
    let tol = spec.tol;
    Ok(Some(match &spec.set {
        SetSpec::Ellipsoid(e) => discrete_ellipsoid(&m, e, tol)?,
        SetSpec::PolyhedronPair(p) => discrete_polyhedron(&m, p, tol)?,
        SetSpec::PolyhedralCone(c) => discrete_polyhedron(&m, &PolyhedronPair::from_cone(c)?, tol)?,
        SetSpec::LorenzCone(c) => discrete_lorenz(&m, c, tol)?,
        SetSpec::HPolyhedron(_) | SetSpec::VPolyhedron(_) => return Ok(None),
    }))
}

fn verdict_status(verdicts: &[report::NamedVerdict]) -> Status {
    if verdicts.iter().any(|v| v.verdict.outcome == Outcome::Fails) {
        Status::Violated
    } else if verdicts.iter().any(|v| v.verdict.outcome == Outcome::Inconclusive) {
        Status::Inconclusive
    } else {
        Status::Holds
    }
}

fn named(name: &str, verdict: Verdict) -> report::NamedVerdict {
    report::NamedVerdict { name: name.into(), verdict }
}

fn threshold(name: &str, report: steplen::thresholds::ThresholdReport) -> report::NamedThreshold {
    report::NamedThreshold { name: name.into(), report }
}

fn euler(spec: &ProblemSpec) -> steplen::Result<EulerMap> {
    Ok(EulerMap::new(LinearSystem::new(spec.a.clone())?, spec.method))
}

fn require<T: Copy>(v: Option<T>, field: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Validation(vec![format!("`{field}` is required for this command")]))
}

/// Runs `command` on a validated problem.
pub fn run_command(spec: &ProblemSpec, command: Command) -> Result<Report, CliError> {
    let start = Instant::now();
    let mut r = new_report(spec, command);
    let samples = spec.samples.unwrap_or(problem::DEFAULT_SAMPLES);
    match command {
        Command::Validate => {
            r.validation = Some(validate_set(&spec.set, spec.tol));
        }
        Command::Check => {
            match continuous_verdict(spec, samples)? {
                Some(v) => r.verdicts.push(named("continuous", v)),
                None => r.notes.push(format!("no continuous check for a bare {}", spec.set.kind())),
            }
            if let Some(dt) = spec.dt {
                match discrete_verdict(spec, dt)? {
                    Some(v) => r.verdicts.push(named(&format!("discrete {} dt={dt}", spec.method), v)),
                    None => r.notes.push(format!("no discrete check for a bare {}", spec.set.kind())),
                }
            }
            r.status = verdict_status(&r.verdicts);
        }
        Command::Threshold => run_threshold(spec, samples, &mut r)?,
        Command::Simulate => {
            let x0 = spec.point.clone().ok_or_else(|| CliError::Validation(vec!["`point` is required for simulate".into()]))?;
            let dt = require(spec.dt, "dt")?;
            let steps = require(spec.steps, "steps")?;
            let traj = simulate(&euler(spec)?, dt, &x0, steps, Some(&spec.set), spec.tol)?;
            r.status = if traj.first_exit.is_some() { Status::Violated } else { Status::Holds };
            r.trajectory = Some(traj);
        }
        Command::Verify => {
            let dt = require(spec.dt, "dt")?;
            let v = sample_verify(&euler(spec)?, dt, &spec.set, samples, spec.seed, spec.tol)?;
            r.status = if v.violations > 0 { Status::Violated } else { Status::Holds };
            r.verification = Some(v);
        }
    }
    r.timing_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(r)
}

fn run_threshold(spec: &ProblemSpec, samples: usize, r: &mut Report) -> Result<(), CliError> {
    let a = &spec.a;
    if let Some(x) = &spec.point {
        match &spec.set {
            SetSpec::Ellipsoid(_) | SetSpec::LorenzCone(_) => {
                r.thresholds.push(threshold("local backward-euler", local_backward_euler(a, &spec.set, x, spec.tol)?));
            }
            other => r.notes.push(format!("local thresholds are not available for a {}", other.kind())),
        }
    }
    let certified = match (spec.method, &spec.set) {
        (Method::BackwardEuler, _) => Some(backward_euler_uniform(a, &spec.set, spec.tol, spec.assume_invariant)),
        (Method::ForwardEuler, SetSpec::PolyhedronPair(p)) => Some(forward_euler_uniform_polyhedron(a, p, spec.tol)),
        (Method::ForwardEuler, SetSpec::PolyhedralCone(c)) => {
            Some(PolyhedronPair::from_cone(c).and_then(|p| forward_euler_uniform_polyhedron(a, &p, spec.tol)))
        }
        (Method::ForwardEuler, _) => None,
    };
    match certified {
        Some(Ok(t)) => r.thresholds.push(threshold(&format!("certified {}", spec.method), t)),
        Some(Err(steplen::Error::NotFlowInvariant(why))) => r.notes.push(format!("no certified threshold: {why}")),
        Some(Err(e)) => return Err(e.into()),
        None => r.notes.push(format!("no certified uniform threshold for {} on a {}", spec.method, spec.set.kind())),
    }
    let dt_max = match spec.dt_max {
        Some(d) => d,
        None => default_dt_max(a)?,
    };
    match &spec.set {
        SetSpec::HPolyhedron(_) | SetSpec::VPolyhedron(_) => {
            r.notes.push(format!("no exact discrete check for a bare {}", spec.set.kind()));
        }
        _ => {
            let t = optimal_uniform(a, &spec.set, spec.method, Some(dt_max), spec.tol, spec.tol_dt)?;
            r.thresholds.push(threshold(&format!("optimal {}", spec.method), t));
        }
    }
    if spec.samples.is_some() {
        let mut req = EmpiricalRequest::new(samples, dt_max, spec.seed);
        req.tol = spec.tol;
        req.tol_dt = spec.tol_dt;
        let t = empirical_threshold_with(&euler(spec)?, &spec.set, &req)?;
        r.thresholds.push(threshold(&format!("empirical {}", spec.method), t));
    }
    let zero = r.thresholds.iter().any(|t| t.report.value <= 0.0 && !t.name.starts_with("local"));
    r.status = if zero { Status::ZeroThreshold } else { Status::Ok };
    Ok(())
}

/// Exit code for a finished report.
pub fn report_exit_code(r: &Report) -> u8 {
    match r.status {
        Status::Violated | Status::ZeroThreshold => 1,
        Status::Ok | Status::Holds | Status::Inconclusive => 0,
    }
}
