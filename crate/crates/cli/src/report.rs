//! Report document and its JSON and text renderings.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use steplen::dynsys::Trajectory;
use steplen::invariance::Verdict;
use steplen::oracle::VerifyReport;
use steplen::real::Real;
use steplen::sets::ValidationReport;
use steplen::thresholds::ThresholdReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Holds,
    Violated,
    ZeroThreshold,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEcho {
    pub example: Option<String>,
    pub dim: usize,
    pub set_kind: String,
    pub method: String,
    pub dt: Option<Real>,
    pub steps: Option<usize>,
    pub samples: Option<usize>,
    pub assume_invariant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedVerdict {
    pub name: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedThreshold {
    pub name: String,
    #[serde(flatten)]
    pub report: ThresholdReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub problem: ProblemEcho,
    #[serde(with = "steplen::real")]
    pub tol: f64,
    #[serde(with = "steplen::real")]
    pub tol_dt: f64,
    pub seed: u64,
    pub status: Status,
    pub validation: Option<ValidationReport>,
    pub verdicts: Vec<NamedVerdict>,
    pub thresholds: Vec<NamedThreshold>,
    pub trajectory: Option<Trajectory>,
    pub verification: Option<VerifyReport>,
    pub notes: Vec<String>,
    pub timing_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Text,
}

/// Pretty JSON with every float written to 17 significant digits.
struct ExactFloats<'a>(PrettyFormatter<'a>);

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json(r: &Report) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    r.serialize(&mut ser).expect("report serializes");
    buf.push(b'\n');
    String::from_utf8(buf).expect("json is utf-8")
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.10e}")
    }
}

pub fn to_text(r: &Report) -> String {
    let mut s = String::new();
    let p = &r.problem;
    let _ = writeln!(s, "{} {}: {} on a {}-dimensional {}", r.tool, r.command, p.method, p.dim, p.set_kind);
    if let Some(ex) = &p.example {
        let _ = writeln!(s, "problem: {ex}");
    }
    let _ = writeln!(s, "status: {:?}", r.status);
    if let Some(v) = &r.validation {
        let _ = writeln!(s, "validation: {}", if v.passed { "passed" } else { "failed" });
        for f in &v.failures {
            let _ = writeln!(s, "  {} (margin {})", f.invariant, num(f.margin));
        }
    }
    for v in &r.verdicts {
        let _ = writeln!(s, "{}: {:?}, margin {}", v.name, v.verdict.outcome, num(v.verdict.margin));
        let _ = writeln!(s, "  {}", v.verdict.certificate);
        if let Some(w) = &v.verdict.witness {
            let _ = writeln!(s, "  witness {:?} ({} violations)", w, v.verdict.violations);
        }
    }
    for t in &r.thresholds {
        let (open, close) = ("[0, ", if t.report.inclusive { "]" } else { ")" });
        let _ = writeln!(s, "{}: {open}{}{close} via {}", t.name, num(t.report.value), t.report.basis);
        if let Some(b) = &t.report.branch {
            let _ = writeln!(s, "  branch: {b}");
        }
        for n in &t.report.notes {
            let _ = writeln!(s, "  {n}");
        }
    }
    if let Some(tr) = &r.trajectory {
        let _ = writeln!(s, "trajectory: {} states", tr.states.len());
        match tr.first_exit {
            Some(k) => {
                let _ = writeln!(s, "  first exit at step {k}: {:?}", tr.states[k]);
            }
            None => {
                let _ = writeln!(s, "  never leaves the set");
            }
        }
        if let Some(last) = tr.states.last() {
            let _ = writeln!(s, "  final state {last:?}");
        }
    }
    if let Some(v) = &r.verification {
        let _ = writeln!(
            s,
            "verification: {} violations over {} samples (seed {}), max excursion {}",
            v.violations,
            v.samples,
            v.seed,
            num(v.max_excursion)
        );
        for w in v.witnesses.iter().take(3) {
            let _ = writeln!(s, "  {:?} -> {:?}", w.point, w.image);
        }
    }
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    let _ = writeln!(s, "tol {}, tol_dt {}, seed {}, {:.1} ms", num(r.tol), num(r.tol_dt), r.seed, r.timing_ms);
    s
}

pub fn emit_report(r: &Report, format: Format) -> String {
    match format {
        Format::Json => to_json(r),
        Format::Text => to_text(r),
    }
}
