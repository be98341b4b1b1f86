//! Steplength thresholds: local bounds at a point, certified uniform bounds,
//! and optimal uniform bounds found by bisection on exact discrete checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynsys::{step_matrix, LinearSystem, Method};
use crate::error::{Error, Result};
use crate::invariance::{
    continuous_ellipsoid, continuous_lorenz_necessary, continuous_polyhedron, cross_positive_polyhedral,
    discrete_ellipsoid, discrete_polyhedron, lorenz_test, Outcome,
};
use crate::numkernel::{general_spectrum, spectral_norm, Matrix, Vector};
use crate::real::Real;
use crate::sets::{classify_point, LocationKind, PolyhedronPair, SetSpec};

/// Default bisection bracket width for [`optimal_uniform`].
pub const DEFAULT_TOL_DT: f64 = 1e-9;

const SCAN_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdKind {
    Local,
    UniformCertified,
    UniformOptimal,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub kind: ThresholdKind,
    /// Nonnegative, possibly `+inf`.
    #[serde(with = "crate::real")]
    pub value: f64,
    /// Whether `value` itself is an admissible steplength.
    pub inclusive: bool,
    pub basis: String,
    /// Case tag of the formula that fired, when there are several.
    pub branch: Option<String>,
    pub diagnostics: BTreeMap<String, Real>,
    pub notes: Vec<String>,
}

impl ThresholdReport {
    pub fn new(kind: ThresholdKind, value: f64, inclusive: bool, basis: impl Into<String>) -> Self {
        Self {
            kind,
            value,
            inclusive,
            basis: basis.into(),
            branch: None,
            diagnostics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn diag(mut self, key: &str, v: f64) -> Self {
        self.diagnostics.insert(key.to_string(), Real(v));
        self
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).map(|r| r.0)
    }

    /// Whether `dt` is covered by the reported interval.
    pub fn admits(&self, dt: f64) -> bool {
        dt >= 0.0 && (dt < self.value || (self.inclusive && dt == self.value))
    }
}

/// `1 / (largest real positive eigenvalue of A)`, or `+inf` when there is none:
/// the supremum of steplengths for which `I - dt A` stays nonsingular.
pub fn tau_bar(a: &Matrix) -> Result<ThresholdReport> {
    let spec = general_spectrum(a)?;
    let cutoff = 1e-12 * spec.spectral_radius().max(1.0);
    let blocking = spec
        .real_eigenvalues(1e-12)
        .into_iter()
        .filter(|&l| l > cutoff)
        .fold(f64::NEG_INFINITY, f64::max);
    let basis = "I - dt A nonsingular for dt < 1/lambda, lambda the largest real positive eigenvalue of A";
    if blocking.is_finite() {
        Ok(ThresholdReport::new(ThresholdKind::UniformCertified, 1.0 / blocking, false, basis)
            .diag("blocking_eigenvalue", blocking))
    } else {
        Ok(ThresholdReport::new(ThresholdKind::UniformCertified, f64::INFINITY, false, basis)
            .note("A has no real positive eigenvalue"))
    }
}

fn gamma1(beta: f64) -> f64 {
    1.0 - 1.0 / (1.0 + beta).sqrt()
}

fn gamma2(beta: f64) -> f64 {
    (2.0 * beta + 3.0 - (4.0 * beta + 9.0).sqrt()) / (2.0 * beta + 4.0)
}

fn gamma3(beta: f64) -> f64 {
    (beta + 2.0 - (beta + 4.0).sqrt()) / (beta + 3.0)
}

/// Backward-Euler steplength bound at a single point `x` of an ellipsoid
/// `{x^T Q x <= 1}` or a Lorenz cone `{x^T Q x <= 0, x^T Q u <= 0}`.
///
/// Three cases: `x` interior, `x` on the boundary with inward velocity, and
/// `x` on the boundary with tangential velocity.
pub fn local_backward_euler(a: &Matrix, s: &SetSpec, x: &Vector, tol: f64) -> Result<ThresholdReport> {
    let (q, level) = match s {
        SetSpec::Ellipsoid(e) => (e.q(), 1.0),
        SetSpec::LorenzCone(c) => (c.q(), 0.0),
        other => return Err(Error::Unsupported(format!("local thresholds for {}", other.kind()))),
    };
    let n = q.nrows();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.nrows() });
    }
    let loc = classify_point(s, x, tol)?;
    if loc.kind == LocationKind::Outside {
        return Err(Error::NotInSet { margin: loc.margin });
    }
    let a_norm = spectral_norm(a);
    let q_norm = spectral_norm(q);
    let xx = x.norm_squared();
    let basis = "backward-Euler remainder bound at a point";
    if a_norm == 0.0 || xx == 0.0 {
        return Ok(ThresholdReport::new(ThresholdKind::Local, f64::INFINITY, true, basis)
            .note("x is a fixed point of every backward-Euler step"));
    }
    let ax = a * x;
    let report = |branch: &str, gamma_unit: f64, delta: f64, beta: f64| {
        let value = gamma_unit / a_norm;
        let mut r = ThresholdReport::new(ThresholdKind::Local, value, false, basis)
            .diag("delta", delta)
            .diag("beta", beta)
            .diag("norm_a", a_norm)
            .diag("norm_q", q_norm);
        r.branch = Some(branch.to_string());
        debug_assert!(value > 0.0 && value < 1.0 / a_norm, "gamma outside (0, 1/||A||)");
        r
    };

    if loc.kind == LocationKind::Inside {
        let delta = x.dot(&(q * x));
        let beta = (level - delta) / (q_norm * xx);
        return Ok(report("interior", gamma1(beta), delta, beta));
    }

    let flux = ax.dot(&(q * x));
    let band = tol * a_norm * q_norm * xx;
    if flux < -band {
        let delta = -2.0 * flux;
        let beta = delta / (a_norm * q_norm * xx);
        return Ok(report("boundary-inward", gamma2(beta), delta, beta));
    }
    if flux > band {
        return Err(Error::NotFlowInvariant(format!("velocity points outward at x: (Ax)^T Q x = {flux:.6e}")));
    }
    let a2x = a * &ax;
    let delta = -(2.0 * a2x.dot(&(q * x)) + ax.dot(&(q * &ax)));
    let beta = delta / (a_norm * a_norm * q_norm * xx);
    if beta <= tol {
        return Err(Error::BranchPreconditionFailed(format!(
            "tangential boundary point with second-order margin {delta:.6e} <= tol"
        )));
    }
    Ok(report("boundary-tangential", gamma3(beta), delta, beta))
}

/// Largest forward-Euler steplength keeping a flow-invariant polyhedron
/// invariant, by a ratio test over vertices and recession directions.
pub fn forward_euler_uniform_polyhedron(a: &Matrix, p: &PolyhedronPair, tol: f64) -> Result<ThresholdReport> {
    let flow = continuous_polyhedron(a, p, tol)?;
    if flow.outcome != Outcome::Holds {
        return Err(Error::NotFlowInvariant(flow.certificate));
    }
    let (g, b) = (p.h().g(), p.h().b());
    let mut best = f64::INFINITY;
    let mut argmin = String::from("none");
    for (i, v) in p.v().vertices().iter().enumerate() {
        let slack = b - g * v;
        let rate = g * (a * v);
        for j in 0..g.nrows() {
            if rate[j] > tol {
                let eps = slack[j].max(0.0) / rate[j];
                if eps < best {
                    best = eps;
                    argmin = format!("vertex {i}, row {j}");
                }
            }
        }
    }
    for (i, r) in p.v().rays().iter().enumerate() {
        let gr = g * r;
        let rate = g * (a * r);
        for j in 0..g.nrows() {
            if rate[j] > tol * r.norm() {
                let eps = (-gr[j]).max(0.0) / rate[j];
                if eps < best {
                    best = eps;
                    argmin = format!("ray {i}, row {j}");
                }
            }
        }
    }
    Ok(ThresholdReport::new(
        ThresholdKind::UniformCertified,
        best,
        true,
        "forward-Euler ratio test over vertices and rays",
    )
    .note(format!("binding generator: {argmin}")))
}

/// Certified backward-Euler threshold for a flow-invariant set.
///
/// Lorenz-cone flow invariance has no finite sufficient test here, so it is
/// accepted only when `assume_flow_invariant` is set and the sampled
/// boundary condition does not refute it.
pub fn backward_euler_uniform(a: &Matrix, s: &SetSpec, tol: f64, assume_flow_invariant: bool) -> Result<ThresholdReport> {
    let flow = match s {
        SetSpec::Ellipsoid(e) => continuous_ellipsoid(a, e, tol)?,
        SetSpec::PolyhedronPair(p) => continuous_polyhedron(a, p, tol)?,
        SetSpec::PolyhedralCone(c) => cross_positive_polyhedral(a, c, tol)?,
        SetSpec::LorenzCone(c) => {
            let v = continuous_lorenz_necessary(a, c, 2000, 0, tol)?;
            if v.outcome == Outcome::Fails {
                return Err(Error::NotFlowInvariant(v.certificate));
            }
            if !assume_flow_invariant {
                return Err(Error::NotFlowInvariant(
                    "Lorenz-cone flow invariance cannot be certified; assert it to proceed".into(),
                ));
            }
            crate::invariance::Verdict { outcome: Outcome::Holds, ..v }
        }
        other => return Err(Error::Unsupported(format!("uniform thresholds need vertices and rays, got {}", other.kind()))),
    };
    if flow.outcome != Outcome::Holds {
        return Err(Error::NotFlowInvariant(flow.certificate));
    }
    if let SetSpec::Ellipsoid(_) = s {
        return Ok(ThresholdReport::new(
            ThresholdKind::UniformCertified,
            f64::INFINITY,
            true,
            "A^T Q + Q A - t A^T Q A is NSD for every t >= 0",
        ));
    }
    let mut r = tau_bar(a)?;
    r.basis = format!("backward Euler on a flow-invariant {}: {}", s.kind(), r.basis);
    if matches!(s, SetSpec::LorenzCone(_)) {
        r.notes.push("flow invariance asserted by caller; necessary boundary test passed".into());
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy)]
struct Probe {
    holds: bool,
    /// The algebraic condition holds but the step reverses the cone.
    spurious: bool,
}

enum Prepared<'a> {
    Spec(&'a SetSpec),
    Pair(PolyhedronPair),
}

fn probe(a: &Matrix, set: &Prepared<'_>, method: Method, dt: f64, tol: f64) -> Result<Probe> {
    let sys = LinearSystem::new(a.clone())?;
    let m = match step_matrix(&sys, method, dt) {
        Ok(m) => m,
        Err(Error::SingularShift { .. }) => return Ok(Probe { holds: false, spurious: false }),
        Err(e) => return Err(e),
    };
    let holds = |v: crate::invariance::Verdict| Probe { holds: v.outcome == Outcome::Holds, spurious: false };
    Ok(match set {
        Prepared::Pair(p) => holds(discrete_polyhedron(&m, p, tol)?),
        Prepared::Spec(SetSpec::Ellipsoid(e)) => holds(discrete_ellipsoid(&m, e, tol)?),
        Prepared::Spec(SetSpec::PolyhedronPair(p)) => holds(discrete_polyhedron(&m, p, tol)?),
        Prepared::Spec(SetSpec::LorenzCone(c)) => {
            let t = lorenz_test(&m, c)?;
            let quad = t.quadratic_holds(tol) && !t.at_search_boundary;
            let orient = t.orientation_holds(tol);
            Probe { holds: quad && orient, spurious: quad && !orient }
        }
        Prepared::Spec(other) => return Err(Error::Unsupported(format!("no exact discrete check for {}", other.kind()))),
    })
}

/// Default upper end of the steplength search: `10 max(1, tau_bar)`.
pub fn default_dt_max(a: &Matrix) -> Result<f64> {
    let t = tau_bar(a)?.value;
    Ok(10.0 * if t.is_finite() { t.max(1.0) } else { 1.0 })
}

/// Largest `dt` in `[0, dt_max]` for which the exact discrete check holds,
/// found by bisection assuming the admissible steplengths form an interval
/// from 0. The assumption is tested afterwards on a grid and any
/// counterexample is reported in the diagnostics.
pub fn optimal_uniform(
    a: &Matrix,
    s: &SetSpec,
    method: Method,
    dt_max: Option<f64>,
    tol: f64,
    tol_dt: f64,
) -> Result<ThresholdReport> {
    if s.dim() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: s.dim(), found: a.nrows() });
    }
    if !(tol_dt > 0.0) {
        return Err(Error::InvalidArgument("tol_dt must be positive".into()));
    }
    let dt_max = match dt_max {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(d) => return Err(Error::InvalidArgument(format!("dt_max must be positive and finite, got {d}"))),
        None => default_dt_max(a)?,
    };
    let prepared = match s {
        SetSpec::PolyhedralCone(c) => Prepared::Pair(PolyhedronPair::from_cone(c)?),
        other => Prepared::Spec(other),
    };
    let pred = |dt: f64| probe(a, &prepared, method, dt, tol);
    if !pred(0.0)?.holds {
        return Err(Error::PredicateFalseAtZero);
    }
    let basis = format!("bisection on the exact discrete check for {method}");
    let mut evaluations = 1usize;
    let (value, inclusive, unbounded) = if pred(dt_max)?.holds {
        evaluations += 1;
        (dt_max, true, true)
    } else {
        evaluations += 1;
        let (mut lo, mut hi) = (0.0f64, dt_max);
        while hi - lo > tol_dt {
            let mid = 0.5 * (lo + hi);
            evaluations += 1;
            if pred(mid)?.holds {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, true, false)
    };

    let mut below_failures = 0usize;
    if value > 0.0 {
        for i in 0..=SCAN_POINTS {
            if !pred(value * i as f64 / SCAN_POINTS as f64)?.holds {
                below_failures += 1;
            }
        }
    }
    let (mut beyond_holds, mut spurious) = (0usize, 0usize);
    if !unbounded {
        // skip the bracket itself; start one bracket width past the value
        let start = value + 2.0 * tol_dt;
        for i in 0..SCAN_POINTS {
            let dt = start + (dt_max - start) * i as f64 / (SCAN_POINTS - 1) as f64;
            let p = pred(dt)?;
            beyond_holds += p.holds as usize;
            spurious += p.spurious as usize;
        }
    }
    let mut r = ThresholdReport::new(ThresholdKind::UniformOptimal, value, inclusive, basis)
        .diag("dt_max", dt_max)
        .diag("bracket", tol_dt)
        .diag("evaluations", evaluations as f64)
        .diag("scan_failures_below", below_failures as f64)
        .diag("scan_holds_beyond", beyond_holds as f64)
        .diag("spurious_branch_points", spurious as f64);
    if unbounded {
        r = r.note("check holds at dt_max; unbounded within search");
    }
    if below_failures > 0 || beyond_holds > 0 {
        r = r.note("admissible steplengths are not an interval from 0 on the scan grid");
    }
    if spurious > 0 {
        r = r.note(format!("{spurious} scan points satisfy the quadratic condition but reverse the cone; rejected"));
    }
    Ok(r)
}
