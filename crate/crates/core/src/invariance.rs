//! Exact and necessary-condition tests that a set is invariant for the flow
//! of `x' = Ax` or for a single discrete step `x -> Mx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{definiteness, general_spectrum, spectral_norm, sym_eigen, Matrix, Vector};
use crate::sets::{
    sample_points_with, ConeScaling, Ellipsoid, LorenzCone, PolyhedralCone, PolyhedronPair, SampleRequest, SetSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    /// Signed slack of the tested condition; negative when it is violated.
    #[serde(with = "crate::real")]
    pub margin: f64,
    /// Number of violating generator pairs, samples or eigen-directions found.
    pub violations: usize,
    /// A point of the set at which the condition fails.
    pub witness: Option<Vec<f64>>,
    pub certificate: String,
}

impl Verdict {
    fn holds(margin: f64, certificate: impl Into<String>) -> Self {
        Self { outcome: Outcome::Holds, margin, violations: 0, witness: None, certificate: certificate.into() }
    }

    fn fails(margin: f64, violations: usize, witness: &Vector, certificate: impl Into<String>) -> Self {
        Self {
            outcome: Outcome::Fails,
            margin,
            violations: violations.max(1),
            witness: Some(witness.iter().copied().collect()),
            certificate: certificate.into(),
        }
    }

    fn inconclusive(margin: f64, certificate: impl Into<String>) -> Self {
        Self { outcome: Outcome::Inconclusive, margin, violations: 0, witness: None, certificate: certificate.into() }
    }

    pub fn holds_p(&self) -> bool {
        self.outcome == Outcome::Holds
    }

    pub fn witness_vector(&self) -> Option<Vector> {
        self.witness.as_ref().map(|w| Vector::from_column_slice(w))
    }
}

fn check_dims(m: &Matrix, n: usize) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.nrows() });
    }
    Ok(())
}

/// Boundary point of the ellipsoid maximizing `x^T S x`, i.e. the top
/// generalized eigenvector of `(S, Q)` scaled to `x^T Q x = 1`.
fn worst_boundary_direction(s: &Matrix, e: &Ellipsoid) -> Result<(Vector, f64)> {
    let n = e.dim();
    let chol = e
        .q()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidSet("Q not positive definite".into()))?;
    let l_inv = chol.l().try_inverse().ok_or_else(|| Error::InvalidSet("Q not positive definite".into()))?;
    let reduced = &l_inv * s * l_inv.transpose();
    let spec = sym_eigen(&((&reduced + reduced.transpose()) * 0.5), 1e-6)?;
    // x = L^{-T} y has x^T Q x = y^T y = 1
    let x = l_inv.transpose() * spec.vector(0);
    debug_assert_eq!(x.len(), n);
    Ok((x, spec.max()))
}

/// Flow invariance of an ellipsoid: `A^T Q + Q A` negative semidefinite.
pub fn continuous_ellipsoid(a: &Matrix, e: &Ellipsoid, tol: f64) -> Result<Verdict> {
    check_dims(a, e.dim())?;
    let q = e.q();
    let s = a.transpose() * q + q * a;
    let d = definiteness(&s, tol)?;
    let margin = -d.lambda_max;
    if d.is_nsd() {
        return Ok(Verdict::holds(margin, format!("A^T Q + Q A is NSD (lambda_max = {:.6e})", d.lambda_max)));
    }
    let (x, rate) = worst_boundary_direction(&s, e)?;
    Ok(Verdict::fails(
        margin,
        d.inertia.n_plus,
        &x,
        format!("A^T Q + Q A has lambda_max = {:.6e}; d/dt x^T Q x = {:.6e} at the witness", d.lambda_max, rate),
    ))
}

/// One-step invariance of an ellipsoid under `M`: `M^T Q M - Q` NSD.
pub fn discrete_ellipsoid(m: &Matrix, e: &Ellipsoid, tol: f64) -> Result<Verdict> {
    check_dims(m, e.dim())?;
    let q = e.q();
    let s = m.transpose() * q * m - q;
    let d = definiteness(&s, tol)?;
    let margin = -d.lambda_max;
    if d.is_nsd() {
        return Ok(Verdict::holds(margin, format!("M^T Q M - Q is NSD (lambda_max = {:.6e})", d.lambda_max)));
    }
    let (x, excess) = worst_boundary_direction(&s, e)?;
    if excess <= tol {
        return Ok(Verdict::inconclusive(margin, "M^T Q M - Q has a positive eigenvalue but no boundary point exits by more than tol"));
    }
    Ok(Verdict::fails(
        margin,
        d.inertia.n_plus,
        &x,
        format!("M^T Q M - Q has lambda_max = {:.6e}; witness image level = {:.6e}", d.lambda_max, 1.0 + excess),
    ))
}

fn keep_worst(slot: &mut Option<(f64, Vector, String)>, score: f64, make: impl FnOnce() -> (Vector, String)) {
    if slot.as_ref().is_none_or(|s| score > s.0) {
        let (w, why) = make();
        *slot = Some((score, w, why));
    }
}

fn check_pair(p: &PolyhedronPair, tol: f64) -> Result<()> {
    match p.consistency(tol) {
        Some((what, _)) => Err(Error::InconsistentPair(what)),
        None => Ok(()),
    }
}

fn active(slack: f64, b: f64, tol: f64) -> bool {
    slack.abs() <= tol * b.abs().max(1.0)
}

/// Flow invariance of a polyhedron via sub-tangentiality at its generators.
pub fn continuous_polyhedron(a: &Matrix, p: &PolyhedronPair, tol: f64) -> Result<Verdict> {
    check_dims(a, p.dim())?;
    check_pair(p, tol)?;
    let (g, b) = (p.h().g(), p.h().b());
    let mut margin = f64::INFINITY;
    let mut violations = 0;
    let mut worst: Option<(f64, Vector, String)> = None;
    for (i, x) in p.v().vertices().iter().enumerate() {
        let slack = b - g * x;
        let gax = g * (a * x);
        for j in 0..g.nrows() {
            if active(slack[j], b[j], tol) {
                margin = margin.min(-gax[j]);
                if gax[j] > tol {
                    violations += 1;
                    keep_worst(&mut worst, gax[j], || (x.clone(), format!("vertex {i}, row {j}: G_j A x = {:.6e} > 0", gax[j])));
                }
            }
        }
    }
    for (i, r) in p.v().rays().iter().enumerate() {
        let gr = g * r;
        let gar = g * (a * r);
        let scale = r.norm().max(f64::MIN_POSITIVE);
        for j in 0..g.nrows() {
            if gr[j].abs() <= tol * scale {
                margin = margin.min(-gar[j] / scale);
                if gar[j] > tol * scale {
                    violations += 1;
                    // x^0 + theta r leaves through row j under the flow for large theta
                    let base = &p.v().vertices()[0];
                    keep_worst(&mut worst, gar[j] / scale, || {
                        (base + r, format!("ray {i}, row {j}: G_j r = 0 but G_j A r = {:.6e} > 0", gar[j]))
                    });
                }
            }
        }
    }
    Ok(match worst {
        None => Verdict::holds(margin, "A x is sub-tangential at every vertex and recession direction"),
        Some((_, w, why)) => Verdict::fails(margin, violations, &w, why),
    })
}

/// One-step invariance of a polyhedron under `M`, reduced to its generators.
pub fn discrete_polyhedron(m: &Matrix, p: &PolyhedronPair, tol: f64) -> Result<Verdict> {
    check_dims(m, p.dim())?;
    check_pair(p, tol)?;
    let (g, b) = (p.h().g(), p.h().b());
    let mut margin = f64::INFINITY;
    let mut violations = 0;
    let mut worst: Option<(f64, Vector, String)> = None;
    for (i, x) in p.v().vertices().iter().enumerate() {
        let img = m * x;
        let slacks = b - g * &img;
        let slack = slacks.min();
        margin = margin.min(slack);
        if slack < -tol {
            violations += 1;
            let excess: f64 = slacks.iter().map(|v| (-v).max(0.0)).sum();
            keep_worst(&mut worst, excess, || (x.clone(), format!("vertex {i} maps outside: min(b - G M x) = {slack:.6e}")));
        }
    }
    let base = &p.v().vertices()[0];
    let base_img = g * (m * base);
    for (i, r) in p.v().rays().iter().enumerate() {
        let gmr = g * (m * r);
        let scale = r.norm().max(f64::MIN_POSITIVE);
        let (j, worst_rate) = gmr.argmax();
        margin = margin.min(-worst_rate / scale);
        if worst_rate > tol * scale {
            violations += 1;
            // far enough along the ray the image crosses row j by a full unit
            let theta = ((b[j] + 1.0 - base_img[j]) / worst_rate).max(0.0) + 1.0;
            keep_worst(&mut worst, worst_rate / scale, || {
                (base + r * theta, format!("ray {i} image leaves the recession cone: G_j M r = {worst_rate:.6e} > 0"))
            });
        }
    }
    Ok(match worst {
        None => Verdict::holds(margin, "every vertex image lies in P and every ray image in its recession cone"),
        Some((_, w, why)) => Verdict::fails(margin, violations, &w, why),
    })
}

fn check_cone_pair(c: &PolyhedralCone, tol: f64) -> Result<()> {
    for (j, f) in c.facet_normals().iter().enumerate() {
        for (i, r) in c.rays().iter().enumerate() {
            if f.dot(r) > tol * f.norm().max(1.0) * r.norm().max(1.0) {
                return Err(Error::InconsistentPair(format!("ray {i} violates facet {j}")));
            }
        }
    }
    Ok(())
}

/// Cross-positivity of `A` on a polyhedral cone, checked on incident
/// (extreme ray, facet) pairs with the dual vector `y = -f`.
pub fn cross_positive_polyhedral(a: &Matrix, c: &PolyhedralCone, tol: f64) -> Result<Verdict> {
    check_dims(a, c.dim())?;
    check_cone_pair(c, tol)?;
    let mut margin = f64::INFINITY;
    let mut violations = 0;
    let mut worst: Option<(f64, Vector, String)> = None;
    for (i, r) in c.rays().iter().enumerate() {
        let ar = a * r;
        for (j, f) in c.facet_normals().iter().enumerate() {
            if !PolyhedralCone::incident(f, r, tol) {
                continue;
            }
            let value = -f.dot(&ar) / (f.norm() * r.norm());
            margin = margin.min(value);
            if value < -tol {
                violations += 1;
                keep_worst(&mut worst, -value, || (r.clone(), format!("ray {i} on facet {j}: y^T A r = {value:.6e} < 0")));
            }
        }
    }
    Ok(match worst {
        None => Verdict::holds(margin, "y^T A x >= 0 on every orthogonal extreme pair (cross-positive)"),
        Some((_, w, why)) => Verdict::fails(margin, violations, &w, why),
    })
}

/// Raw ingredients of the discrete Lorenz-cone test, exposed for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzTest {
    /// `min over lambda >= 0 of lambda_max(M^T Q M - lambda Q)` on normalized data.
    pub s_procedure_value: f64,
    pub lambda: f64,
    /// The minimizer sits on the upper end of the search interval.
    pub at_search_boundary: bool,
    /// `-(M u)^T Q u / ||Q u||` for the cone axis `u`; negative when `M` flips the nappe.
    pub orientation_margin: f64,
}

impl LorenzTest {
    pub fn quadratic_holds(&self, tol: f64) -> bool {
        self.s_procedure_value <= tol
    }

    pub fn orientation_holds(&self, tol: f64) -> bool {
        self.orientation_margin >= -tol
    }
}

const LAMBDA_GRID: usize = 1000;
const GOLDEN_WIDTH: f64 = 1e-10;

fn lambda_max_of(p: &Matrix, q: &Matrix, lambda: f64) -> f64 {
    let s = p - q * lambda;
    sym_eigen(&s, 1e-6).map(|e| e.max()).unwrap_or(f64::INFINITY)
}

/// S-procedure search and axis orientation test for `M C ⊆ C`.
pub fn lorenz_test(m: &Matrix, c: &LorenzCone) -> Result<LorenzTest> {
    check_dims(m, c.dim())?;
    let mn = spectral_norm(m);
    let q_norm = c.spectrum().values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let qh = c.q() / q_norm;
    if mn == 0.0 {
        return Ok(LorenzTest { s_procedure_value: 0.0, lambda: 0.0, at_search_boundary: false, orientation_margin: 0.0 });
    }
    let mh = m / mn;
    let p = mh.transpose() * &qh * &mh;
    let p = (&p + p.transpose()) * 0.5;
    let neg = c.spectrum().min().abs() / q_norm;
    let hi = (spectral_norm(&p) / neg * 10.0).max(1e-12);

    let f = |l: f64| lambda_max_of(&p, &qh, l);
    let step = hi / LAMBDA_GRID as f64;
    let (mut best_l, mut best) = (0.0, f(0.0));
    let mut best_i = 0;
    for i in 1..=LAMBDA_GRID {
        let l = step * i as f64;
        let v = f(l);
        if v < best {
            best = v;
            best_l = l;
            best_i = i;
        }
    }
    // golden-section refinement on the bracket around the best grid point
    let (mut a, mut b) = (step * best_i.saturating_sub(1) as f64, (step * (best_i + 1) as f64).min(hi));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > GOLDEN_WIDTH * hi.max(1.0) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    for (l, v) in [(x1, f1), (x2, f2)] {
        if v < best {
            best = v;
            best_l = l;
        }
    }
    // the feasible lambdas are bounded by generalized eigenvalues of (P, Q)
    if let Some(qinv) = qh.clone().try_inverse() {
        if let Ok(spec) = general_spectrum(&(qinv * &p)) {
            for l in spec.real_eigenvalues(1e-9) {
                if l >= 0.0 {
                    let v = f(l);
                    if v < best {
                        best = v;
                        best_l = l;
                    }
                }
            }
        }
    }
    let u = c.axis();
    let qu = &qh * u;
    let orientation_margin = -(&mh * u).dot(&qu) / qu.norm();
    Ok(LorenzTest {
        s_procedure_value: best,
        lambda: best_l * q_norm / (mn * mn),
        at_search_boundary: best_l >= hi * (1.0 - 1e-9),
        orientation_margin,
    })
}

fn worst_image(m: &Matrix, c: &LorenzCone, candidates: &[Vector]) -> Option<(Vector, f64)> {
    candidates
        .iter()
        .filter(|x| c.margin(x) >= -1e-12)
        .map(|x| (x.clone(), c.margin(&(m * x))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// One-step invariance of a Lorenz cone under `M`.
pub fn discrete_lorenz(m: &Matrix, c: &LorenzCone, tol: f64) -> Result<Verdict> {
    let t = lorenz_test(m, c)?;
    let margin = (-t.s_procedure_value).min(t.orientation_margin);
    if t.quadratic_holds(tol) && t.orientation_holds(tol) {
        return Ok(Verdict::holds(
            -t.s_procedure_value,
            format!("M^T Q M - lambda Q is NSD at lambda = {:.6e}; axis orientation preserved", t.lambda),
        ));
    }
    if !t.orientation_holds(tol) {
        let u = c.axis().clone();
        let img = c.margin(&(m * &u));
        if img < -tol {
            return Ok(Verdict::fails(
                t.orientation_margin,
                1,
                &u,
                format!("M maps the cone axis into the opposite nappe (orientation margin {:.6e})", t.orientation_margin),
            ));
        }
    }
    if t.at_search_boundary && t.orientation_holds(tol) {
        return Ok(Verdict::inconclusive(margin, "S-procedure search ended at its upper bound without a certificate"));
    }
    let cone = SetSpec::LorenzCone(c.clone());
    let mut req = SampleRequest::new(256, 2048, 0x5eed);
    req.cone_scaling = ConeScaling::Base;
    let mut candidates: Vec<Vector> = sample_points_with(&cone, &req)?.into_iter().map(|s| s.point).collect();
    candidates.push(c.axis().clone());
    if let Ok(spec) = sym_eigen(&(m.transpose() * c.q() * m - c.q() * t.lambda), 1e-6) {
        let v = spec.vector(0);
        candidates.push(v.clone());
        candidates.push(-v);
    }
    match worst_image(m, c, &candidates) {
        Some((w, img)) if img < -tol => {
            let violations = candidates.iter().filter(|x| c.margin(x) >= -1e-12 && c.margin(&(m * *x)) < -tol).count();
            Ok(Verdict::fails(
                margin,
                violations,
                &w,
                format!(
                    "no lambda >= 0 makes M^T Q M - lambda Q NSD (best lambda_max {:.6e}); witness image margin {img:.6e}",
                    t.s_procedure_value
                ),
            ))
        }
        _ => Ok(Verdict::inconclusive(margin, "S-procedure infeasible but no sampled cone point exits by more than tol")),
    }
}

/// Necessary condition for flow invariance of a Lorenz cone: the quadratic
/// form `x^T (A^T Q + Q A) x` must be nonpositive on the cone boundary.
/// Never returns `Holds`.
pub fn continuous_lorenz_necessary(a: &Matrix, c: &LorenzCone, n_samples: usize, seed: u64, tol: f64) -> Result<Verdict> {
    check_dims(a, c.dim())?;
    let q = c.q();
    let s = a.transpose() * q + q * a;
    let scale = spectral_norm(&s).max(1.0);
    let cone = SetSpec::LorenzCone(c.clone());
    let mut req = SampleRequest::new(0, n_samples, seed);
    req.cone_scaling = ConeScaling::Base;
    req.tol = tol;
    let pts = sample_points_with(&cone, &req)?;
    let mut worst: Option<(Vector, f64)> = None;
    let mut violations = 0;
    for sample in &pts {
        let x = &sample.point;
        let v = x.dot(&(&s * x)) / x.norm_squared();
        if v > tol * scale {
            violations += 1;
        }
        if worst.as_ref().is_none_or(|w| v > w.1) {
            worst = Some((x.clone(), v));
        }
    }
    let (w, v) = match worst {
        Some(w) => w,
        None => return Ok(Verdict::inconclusive(f64::INFINITY, "no boundary samples requested")),
    };
    if violations > 0 {
        return Ok(Verdict::fails(
            -v,
            violations,
            &w,
            format!("x^T (A^T Q + Q A) x = {:.6e} > 0 at a boundary point ({violations} of {} samples)", v * w.norm_squared(), pts.len()),
        ));
    }
    Ok(Verdict::inconclusive(
        -v,
        format!("necessary boundary condition holds on {} samples; sufficiency is not decided", pts.len()),
    ))
}
