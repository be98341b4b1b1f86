//! Candidate invariant sets: polyhedra in H-, V- and paired form, ellipsoids,
//! Lorenz (second-order) cones and polyhedral cones.
//!
//! Dual descriptions are taken as input and cross-checked, never computed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{
    self, check_finite, definiteness, sym_eigen, Definiteness, Inertia, Matrix, SymmetricSpectrum,
    Vector, DEFAULT_EIG_TOL,
};

/// Absolute tolerance on normalized membership margins.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

/// `{x : Gx <= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolyhedron {
    g: Matrix,
    b: Vector,
}

impl HPolyhedron {
    pub fn new(g: Matrix, b: Vector) -> Result<Self> {
        check_finite(&g)?;
        if b.len() != g.nrows() {
            return Err(Error::DimensionMismatch { expected: g.nrows(), found: b.len() });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix);
        }
        Ok(Self { g, b })
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn bounding_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let n = lo.len();
        if hi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: hi.len() });
        }
        let mut g = Matrix::zeros(2 * n, n);
        let mut b = Vector::zeros(2 * n);
        for i in 0..n {
            g[(i, i)] = 1.0;
            b[i] = hi[i];
            g[(n + i, i)] = -1.0;
            b[n + i] = -lo[i];
        }
        Self::new(g, b)
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.g.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.g.nrows()
    }

    pub fn row(&self, j: usize) -> Vector {
        self.g.row(j).transpose()
    }

    /// `min_j (b_j - G_j x)`.
    pub fn margin(&self, x: &Vector) -> f64 {
        (&self.b - &self.g * x).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Searches for a point of the polyhedron by repeated projection onto the
    /// most violated half-space. Returns the point and its final max violation.
    pub fn feasibility_probe(&self, tol: f64) -> (Vector, f64) {
        let mut x = Vector::zeros(self.dim());
        let norms: Vec<f64> = (0..self.n_rows()).map(|j| self.g.row(j).norm_squared()).collect();
        let mut worst = f64::INFINITY;
        for _ in 0..100_000 {
            let r = &self.g * &x - &self.b;
            let (j, viol) = r
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            worst = viol;
            if viol <= tol || norms[j] == 0.0 {
                break;
            }
            // slight over-projection to make progress on degenerate corners
            let step = (viol + 0.5 * tol) / norms[j];
            x -= self.row(j) * step;
        }
        (x, worst.max(0.0))
    }
}

/// Convex hull of `vertices` plus the conic hull of `rays`.
#[derive(Debug, Clone, PartialEq)]
pub struct VPolyhedron {
    vertices: Vec<Vector>,
    rays: Vec<Vector>,
}

impl VPolyhedron {
    pub fn new(vertices: Vec<Vector>, rays: Vec<Vector>) -> Result<Self> {
        let n = vertices
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::InvalidSet("a V-polyhedron needs at least one vertex".into()))?;
        for v in vertices.iter().chain(rays.iter()) {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMatrix);
            }
        }
        Ok(Self { vertices, rays })
    }

    pub fn vertices(&self) -> &[Vector] {
        &self.vertices
    }

    pub fn rays(&self) -> &[Vector] {
        &self.rays
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }
}

/// A polyhedron given by both representations.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedronPair {
    h: HPolyhedron,
    v: VPolyhedron,
}

impl PolyhedronPair {
    pub fn new(h: HPolyhedron, v: VPolyhedron) -> Result<Self> {
        if h.dim() != v.dim() {
            return Err(Error::DimensionMismatch { expected: h.dim(), found: v.dim() });
        }
        Ok(Self { h, v })
    }

    /// The box `[lo, hi]` with its vertices enumerated.
    pub fn bounding_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let h = HPolyhedron::bounding_box(lo, hi)?;
        let n = lo.len();
        let vertices = (0..1usize << n)
            .map(|mask| Vector::from_iterator(n, (0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })))
            .collect();
        Self::new(h, VPolyhedron::new(vertices, Vec::new())?)
    }

    /// The cone as a polyhedron with the single vertex 0.
    pub fn from_cone(c: &PolyhedralCone) -> Result<Self> {
        let n = c.dim();
        let mut g = Matrix::zeros(c.facet_normals.len(), n);
        for (j, f) in c.facet_normals.iter().enumerate() {
            g.set_row(j, &f.transpose());
        }
        let h = HPolyhedron::new(g, Vector::zeros(c.facet_normals.len()))?;
        Self::new(h, VPolyhedron::new(vec![Vector::zeros(n)], c.rays.clone())?)
    }

    pub fn h(&self) -> &HPolyhedron {
        &self.h
    }

    pub fn v(&self) -> &VPolyhedron {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Returns the first representation inconsistency found, if any.
    pub fn consistency(&self, tol: f64) -> Option<(String, f64)> {
        for (i, x) in self.v.vertices.iter().enumerate() {
            let m = self.h.margin(x);
            if m < -tol * self.h.b.amax().max(1.0) {
                return Some((format!("vertex {i} violates Gx <= b"), m));
            }
        }
        for (i, r) in self.v.rays.iter().enumerate() {
            let m = -(&self.h.g * r).max();
            if m < -tol * r.norm().max(1.0) {
                return Some((format!("ray {i} violates Gr <= 0"), m));
            }
        }
        None
    }
}

/// `{x : x^T Q x <= 1}` with `Q` positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    q: Matrix,
}

impl Ellipsoid {
    pub fn new(q: Matrix) -> Result<Self> {
        check_finite(&q)?;
        numkernel::check_square(&q)?;
        Ok(Self { q })
    }

    pub fn unit_ball(n: usize) -> Self {
        Self { q: Matrix::identity(n, n) }
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn level(&self, x: &Vector) -> f64 {
        x.dot(&(&self.q * x))
    }
}

/// `{x : x^T Q x <= 0, x^T Q u <= 0}` where `Q` has inertia `(n-1, 0, 1)` and
/// `u` is the unit eigenvector of its negative eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzCone {
    q: Matrix,
    axis: Vector,
    spectrum: SymmetricSpectrum,
    q_norm: f64,
    qu_norm: f64,
}

impl LorenzCone {
    /// Builds the cone with the canonical axis: the negative-eigenvalue
    /// eigenvector, unit length, with its largest-magnitude entry positive.
    pub fn new(q: Matrix) -> Result<Self> {
        let spectrum = sym_eigen(&q, DEFAULT_EIG_TOL)?;
        let mut axis = spectrum.vector(spectrum.values.len() - 1);
        let pivot = axis.iamax();
        if axis[pivot] < 0.0 {
            axis = -axis;
        }
        Ok(Self::assemble(q, axis, spectrum))
    }

    /// Builds the cone selecting the nappe that contains `axis`.
    ///
    /// `axis` is normalized and stored as given; [`validate_set`] checks that
    /// it is an eigenvector of the negative eigenvalue.
    pub fn with_axis(q: Matrix, axis: Vector) -> Result<Self> {
        let spectrum = sym_eigen(&q, DEFAULT_EIG_TOL)?;
        if axis.len() != q.nrows() {
            return Err(Error::DimensionMismatch { expected: q.nrows(), found: axis.len() });
        }
        let norm = axis.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidSet("Lorenz cone axis must be a nonzero finite vector".into()));
        }
        Ok(Self::assemble(q, axis / norm, spectrum))
    }

    fn assemble(q: Matrix, axis: Vector, spectrum: SymmetricSpectrum) -> Self {
        let q = (&q + q.transpose()) * 0.5;
        let q_norm = spectrum.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let qu_norm = (&q * &axis).norm();
        Self { q, axis, spectrum, q_norm, qu_norm }
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn axis(&self) -> &Vector {
        &self.axis
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn spectrum(&self) -> &SymmetricSpectrum {
        &self.spectrum
    }

    /// The same cone described by `alpha * Q`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::with_axis(&self.q * alpha, self.axis.clone())
    }

    /// `(x^T Q x / ||Q||, x^T Q u / ||Q u||)`, both nonpositive on the cone.
    pub fn constraint_values(&self, x: &Vector) -> (f64, f64) {
        let qx = &self.q * x;
        (x.dot(&qx) / self.q_norm.max(f64::MIN_POSITIVE), qx.dot(&self.axis) / self.qu_norm.max(f64::MIN_POSITIVE))
    }

    pub fn margin(&self, x: &Vector) -> f64 {
        let nx = x.norm();
        if nx == 0.0 {
            return 0.0;
        }
        let (quad, lin) = self.constraint_values(x);
        (-quad / (nx * nx)).min(-lin / nx)
    }
}

/// Polyhedral cone given by its extreme rays and outward facet normals:
/// `cone(rays) = {x : f^T x <= 0 for every facet normal f}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralCone {
    rays: Vec<Vector>,
    facet_normals: Vec<Vector>,
}

impl PolyhedralCone {
    pub fn new(rays: Vec<Vector>, facet_normals: Vec<Vector>) -> Result<Self> {
        let n = rays
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::InvalidSet("a polyhedral cone needs at least one ray".into()))?;
        if facet_normals.is_empty() {
            return Err(Error::InvalidSet("a polyhedral cone needs its facet normals".into()));
        }
        for v in rays.iter().chain(facet_normals.iter()) {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMatrix);
            }
        }
        Ok(Self { rays, facet_normals })
    }

    /// The nonnegative orthant of dimension `n`.
    pub fn orthant(n: usize) -> Self {
        let e = |i: usize| Vector::from_iterator(n, (0..n).map(|k| if k == i { 1.0 } else { 0.0 }));
        Self { rays: (0..n).map(e).collect(), facet_normals: (0..n).map(|i| -e(i)).collect() }
    }

    pub fn rays(&self) -> &[Vector] {
        &self.rays
    }

    pub fn facet_normals(&self) -> &[Vector] {
        &self.facet_normals
    }

    pub fn dim(&self) -> usize {
        self.rays[0].len()
    }

    pub fn margin(&self, x: &Vector) -> f64 {
        let nx = x.norm();
        if nx == 0.0 {
            return 0.0;
        }
        self.facet_normals
            .iter()
            .map(|f| -f.dot(x) / f.norm().max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min)
            / nx
    }

    /// Whether ray `r` lies on the facet with normal `f`.
    pub fn incident(f: &Vector, r: &Vector, tol: f64) -> bool {
        f.dot(r).abs() <= tol * f.norm() * r.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetSpec {
    HPolyhedron(HPolyhedron),
    VPolyhedron(VPolyhedron),
    PolyhedronPair(PolyhedronPair),
    Ellipsoid(Ellipsoid),
    LorenzCone(LorenzCone),
    PolyhedralCone(PolyhedralCone),
}

impl SetSpec {
    pub fn dim(&self) -> usize {
        match self {
            SetSpec::HPolyhedron(s) => s.dim(),
            SetSpec::VPolyhedron(s) => s.dim(),
            SetSpec::PolyhedronPair(s) => s.dim(),
            SetSpec::Ellipsoid(s) => s.dim(),
            SetSpec::LorenzCone(s) => s.dim(),
            SetSpec::PolyhedralCone(s) => s.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SetSpec::HPolyhedron(_) => "h-polyhedron",
            SetSpec::VPolyhedron(_) => "v-polyhedron",
            SetSpec::PolyhedronPair(_) => "polyhedron-pair",
            SetSpec::Ellipsoid(_) => "ellipsoid",
            SetSpec::LorenzCone(_) => "lorenz-cone",
            SetSpec::PolyhedralCone(_) => "polyhedral-cone",
        }
    }

    pub fn is_cone(&self) -> bool {
        matches!(self, SetSpec::LorenzCone(_) | SetSpec::PolyhedralCone(_))
    }

    /// Normalized signed membership margin (positive inside).
    pub fn margin(&self, x: &Vector) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(match self {
            SetSpec::HPolyhedron(h) => h.margin(x),
            SetSpec::PolyhedronPair(p) => p.h.margin(x),
            SetSpec::Ellipsoid(e) => 1.0 - e.level(x),
            SetSpec::LorenzCone(c) => c.margin(x),
            SetSpec::PolyhedralCone(c) => c.margin(x),
            SetSpec::VPolyhedron(_) => return Err(Error::RequiresHRepresentation),
        })
    }
}

impl From<Ellipsoid> for SetSpec {
    fn from(s: Ellipsoid) -> Self {
        SetSpec::Ellipsoid(s)
    }
}

impl From<LorenzCone> for SetSpec {
    fn from(s: LorenzCone) -> Self {
        SetSpec::LorenzCone(s)
    }
}

impl From<PolyhedronPair> for SetSpec {
    fn from(s: PolyhedronPair) -> Self {
        SetSpec::PolyhedronPair(s)
    }
}

impl From<PolyhedralCone> for SetSpec {
    fn from(s: PolyhedralCone) -> Self {
        SetSpec::PolyhedralCone(s)
    }
}

impl From<VPolyhedron> for SetSpec {
    fn from(s: VPolyhedron) -> Self {
        SetSpec::VPolyhedron(s)
    }
}

impl From<HPolyhedron> for SetSpec {
    fn from(s: HPolyhedron) -> Self {
        SetSpec::HPolyhedron(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocationKind {
    Inside,
    Boundary,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub kind: LocationKind,
    pub margin: f64,
}

impl Location {
    pub fn from_margin(margin: f64, tol: f64) -> Self {
        let kind = if margin > tol {
            LocationKind::Inside
        } else if margin >= -tol {
            LocationKind::Boundary
        } else {
            LocationKind::Outside
        };
        Self { kind, margin }
    }

    pub fn is_member(&self) -> bool {
        self.kind != LocationKind::Outside
    }
}

pub fn classify_point(s: &SetSpec, x: &Vector, tol: f64) -> Result<Location> {
    Ok(Location::from_margin(s.margin(x)?, tol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationFailure {
    pub invariant: String,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kind: String,
    pub dim: usize,
    pub passed: bool,
    pub failures: Vec<ValidationFailure>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inertia: Option<Inertia>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub definiteness: Option<Definiteness>,
}

impl ValidationReport {
    fn fail(&mut self, invariant: impl Into<String>, margin: f64) {
        self.passed = false;
        self.failures.push(ValidationFailure { invariant: invariant.into(), margin });
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            let msg = self.failures.iter().map(|f| f.invariant.as_str()).collect::<Vec<_>>().join("; ");
            Err(Error::InvalidSet(msg))
        }
    }
}

fn validate_h(h: &HPolyhedron, tol: f64, report: &mut ValidationReport) {
    if h.n_rows() == 0 {
        report.fail("H-polyhedron needs at least one inequality", 0.0);
        return;
    }
    let (_, viol) = h.feasibility_probe(tol);
    if viol > tol {
        report.fail("feasibility probe found no point with Gx <= b", -viol);
    }
}

fn validate_v(v: &VPolyhedron, tol: f64, report: &mut ValidationReport) {
    for (i, r) in v.rays.iter().enumerate() {
        if r.norm() <= tol {
            report.fail(format!("ray {i} is zero"), r.norm());
        }
    }
}

/// Checks every standing assumption on a set and reports each violation.
pub fn validate_set(s: &SetSpec, tol: f64) -> ValidationReport {
    let mut report = ValidationReport {
        kind: s.kind().to_string(),
        dim: s.dim(),
        passed: true,
        failures: Vec::new(),
        inertia: None,
        definiteness: None,
    };
    match s {
        SetSpec::HPolyhedron(h) => validate_h(h, tol, &mut report),
        SetSpec::VPolyhedron(v) => validate_v(v, tol, &mut report),
        SetSpec::PolyhedronPair(p) => {
            validate_h(&p.h, tol, &mut report);
            validate_v(&p.v, tol, &mut report);
            for (i, x) in p.v.vertices.iter().enumerate() {
                let m = p.h.margin(x);
                if m < -tol * p.h.b.amax().max(1.0) {
                    report.fail(format!("vertex {i} violates Gx <= b"), m);
                }
            }
            for (i, r) in p.v.rays.iter().enumerate() {
                let m = -(&p.h.g * r).max();
                if m < -tol * r.norm().max(1.0) {
                    report.fail(format!("ray {i} violates Gr <= 0"), m);
                }
            }
        }
        SetSpec::Ellipsoid(e) => match definiteness(&e.q, tol) {
            Ok(d) => {
                if !d.is_pd() {
                    report.fail("Q not positive definite", d.lambda_min);
                }
                report.inertia = Some(d.inertia);
                report.definiteness = Some(d);
            }
            Err(err) => report.fail(format!("Q rejected: {err}"), 0.0),
        },
        SetSpec::LorenzCone(c) => {
            let n = c.dim();
            if n < 2 {
                report.fail("Lorenz cone needs dimension >= 2", 0.0);
            }
            match definiteness(&c.q, tol) {
                Ok(d) => {
                    let want = Inertia { n_plus: n - 1, n_zero: 0, n_minus: 1 };
                    if d.inertia != want {
                        report.fail(
                            format!(
                                "inertia of Q is ({}, {}, {}), expected ({}, 0, 1)",
                                d.inertia.n_plus,
                                d.inertia.n_zero,
                                d.inertia.n_minus,
                                n - 1
                            ),
                            d.min_margin_eigenvalue,
                        );
                    } else {
                        let lam = d.lambda_min;
                        let resid = (&c.q * &c.axis - &c.axis * lam).norm();
                        if resid > tol.sqrt() * c.q_norm.max(1.0) {
                            report.fail("axis is not the eigenvector of the negative eigenvalue", -resid);
                        }
                        let uqu = c.axis.dot(&(&c.q * &c.axis));
                        if !(uqu < 0.0) {
                            report.fail("axis does not satisfy u^T Q u < 0", -uqu);
                        }
                    }
                    report.inertia = Some(d.inertia);
                    report.definiteness = Some(d);
                }
                Err(err) => report.fail(format!("Q rejected: {err}"), 0.0),
            }
        }
        SetSpec::PolyhedralCone(c) => {
            for (i, r) in c.rays.iter().enumerate() {
                if r.norm() <= tol {
                    report.fail(format!("ray {i} is zero"), r.norm());
                }
            }
            for (j, f) in c.facet_normals.iter().enumerate() {
                for (i, r) in c.rays.iter().enumerate() {
                    let v = f.dot(r);
                    if v > tol * f.norm().max(1.0) * r.norm().max(1.0) {
                        report.fail(format!("ray {i} violates facet {j}"), -v);
                    }
                }
            }
        }
    }
    report
}

/// Affine slice `{x : a^T x = 1}` meeting every nonzero cone element once.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBase {
    pub normal: Vector,
}

impl ConeBase {
    /// Radial projection of a nonzero cone point onto the base.
    pub fn project(&self, x: &Vector) -> Vector {
        x / self.normal.dot(x)
    }
}

fn positive_on_rays(a: &Vector, rays: &[Vector], tol: f64) -> bool {
    rays.iter().all(|r| a.dot(r) > tol * r.norm())
}

pub fn cone_base(c: &SetSpec) -> Result<ConeBase> {
    match c {
        SetSpec::LorenzCone(l) => {
            let a = -(&l.q * &l.axis);
            let n = a.norm();
            if !(n > 0.0) {
                return Err(Error::DegenerateCone);
            }
            Ok(ConeBase { normal: a / n })
        }
        SetSpec::PolyhedralCone(p) => {
            let tol = DEFAULT_MEMBERSHIP_TOL;
            let unit = |v: &Vector| v / v.norm();
            let ray_sum = p.rays.iter().fold(Vector::zeros(p.dim()), |acc, r| acc + unit(r));
            let dual_sum = p.facet_normals.iter().fold(Vector::zeros(p.dim()), |acc, f| acc - unit(f));
            for a in [ray_sum, dual_sum] {
                let n = a.norm();
                if n > tol && positive_on_rays(&(&a / n), &p.rays, tol) {
                    return Ok(ConeBase { normal: a / n });
                }
            }
            Err(Error::DegenerateCone)
        }
        _ => Err(Error::Unsupported("cone_base needs a cone".into())),
    }
}

/// How cone samples are scaled after being drawn on the base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeScaling {
    /// Keep samples on the base slice.
    Base,
    /// Multiply each base sample by a log-uniform factor in `[0.1, 10]`.
    Random,
}

#[derive(Debug, Clone, Copy)]
pub struct SampleRequest {
    pub n_interior: usize,
    pub n_boundary: usize,
    pub seed: u64,
    pub tol: f64,
    pub cone_scaling: ConeScaling,
}

impl SampleRequest {
    pub fn new(n_interior: usize, n_boundary: usize, seed: u64) -> Self {
        Self { n_interior, n_boundary, seed, tol: DEFAULT_MEMBERSHIP_TOL, cone_scaling: ConeScaling::Random }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub point: Vector,
    pub location: Location,
}

/// Draws `n_interior` points classified Inside and `n_boundary` classified
/// Boundary, deterministically for a fixed seed.
pub fn sample_points(s: &SetSpec, n_interior: usize, n_boundary: usize, seed: u64) -> Result<Vec<Sample>> {
    sample_points_with(s, &SampleRequest::new(n_interior, n_boundary, seed))
}

pub fn sample_points_with(s: &SetSpec, req: &SampleRequest) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let mut out = Vec::with_capacity(req.n_interior + req.n_boundary);
    match s {
        SetSpec::VPolyhedron(_) => return Err(Error::RequiresHRepresentation),
        SetSpec::Ellipsoid(e) => {
            let mut draw = |rng: &mut ChaCha8Rng, boundary: bool| {
                let d = gaussian(rng, e.dim());
                let x = &d / e.level(&d).sqrt();
                if boundary {
                    x
                } else {
                    x * rng.random::<f64>().powf(1.0 / e.dim() as f64)
                }
            };
            collect(s, req, &mut rng, &mut out, &mut draw)?;
        }
        SetSpec::LorenzCone(c) => {
            let base = cone_base(s)?;
            let n = c.dim();
            let spec = &c.spectrum;
            let neg = spec.values[n - 1];
            let mut vn = spec.vector(n - 1);
            if vn.dot(&c.axis) < 0.0 {
                vn = -vn;
            }
            let scaling = req.cone_scaling;
            let mut draw = |rng: &mut ChaCha8Rng, boundary: bool| {
                let g = gaussian(rng, n - 1);
                let gn = g.norm().max(f64::MIN_POSITIVE);
                let rho = if boundary { 1.0 } else { rng.random::<f64>().powf(1.0 / (n - 1) as f64) };
                let mut y = vn.clone();
                for i in 0..n - 1 {
                    let c_i = g[i] / gn / spec.values[i].max(f64::MIN_POSITIVE).sqrt() * rho * neg.abs().sqrt();
                    y += spec.vector(i) * c_i;
                }
                rescale(base.project(&y), rng, scaling)
            };
            collect(s, req, &mut rng, &mut out, &mut draw)?;
        }
        SetSpec::PolyhedralCone(c) => {
            let base = cone_base(s)?;
            let on_base: Vec<Vector> = c.rays.iter().map(|r| base.project(r)).collect();
            let scaling = req.cone_scaling;
            let facets: Vec<Vec<usize>> = c
                .facet_normals
                .iter()
                .map(|f| (0..c.rays.len()).filter(|&i| PolyhedralCone::incident(f, &c.rays[i], req.tol)).collect())
                .filter(|v: &Vec<usize>| !v.is_empty())
                .collect();
            let mut draw = |rng: &mut ChaCha8Rng, boundary: bool| {
                let idx: Vec<usize> = if boundary && !facets.is_empty() {
                    facets[rng.random_range(0..facets.len())].clone()
                } else {
                    (0..on_base.len()).collect()
                };
                let w = dirichlet(rng, idx.len());
                let y = idx.iter().zip(w.iter()).fold(Vector::zeros(c.dim()), |acc, (&i, &wi)| acc + &on_base[i] * wi);
                rescale(y, rng, scaling)
            };
            collect(s, req, &mut rng, &mut out, &mut draw)?;
        }
        SetSpec::HPolyhedron(h) => {
            let (start, _) = h.feasibility_probe(req.tol);
            hit_and_run(s, h, start, None, req, &mut rng, &mut out)?;
        }
        SetSpec::PolyhedronPair(p) => {
            let nv = p.v.vertices.len() as f64;
            let mut start = p.v.vertices.iter().fold(Vector::zeros(p.dim()), |acc, v| acc + v) / nv;
            for r in &p.v.rays {
                start += r / (r.norm() * p.v.rays.len() as f64);
            }
            hit_and_run(s, &p.h, start, Some(&p.v.vertices), req, &mut rng, &mut out)?;
        }
    }
    Ok(out)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn rescale(x: Vector, rng: &mut ChaCha8Rng, scaling: ConeScaling) -> Vector {
    match scaling {
        ConeScaling::Base => x,
        ConeScaling::Random => x * 10f64.powf(rng.random_range(-1.0..1.0)),
    }
}

fn exhausted(accepted: usize, attempts: usize) -> bool {
    attempts >= 1000 && accepted * 1000 < attempts
}

fn collect<F>(
    s: &SetSpec,
    req: &SampleRequest,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Sample>,
    draw: &mut F,
) -> Result<()>
where
    F: FnMut(&mut ChaCha8Rng, bool) -> Vector,
{
    for (want, count) in [(LocationKind::Inside, req.n_interior), (LocationKind::Boundary, req.n_boundary)] {
        let (mut accepted, mut attempts) = (0, 0);
        while accepted < count {
            attempts += 1;
            let x = draw(rng, want == LocationKind::Boundary);
            let location = classify_point(s, &x, req.tol)?;
            if location.kind == want {
                out.push(Sample { point: x, location });
                accepted += 1;
            } else if exhausted(accepted, attempts) {
                return Err(Error::SamplingExhausted { accepted, attempts });
            }
        }
    }
    Ok(())
}

/// Chord of `h` through `p` along `d`, clipped to `[-cap, cap]`.
/// The flags report whether each end hit a facet rather than the cap.
fn chord(h: &HPolyhedron, p: &Vector, d: &Vector, cap: f64) -> (f64, f64, bool, bool) {
    let gd = &h.g * d;
    let slack = &h.b - &h.g * p;
    let (mut lo, mut hi) = (-cap, cap);
    let (mut lo_hit, mut hi_hit) = (false, false);
    for j in 0..h.n_rows() {
        let s = slack[j].max(0.0);
        if gd[j] > 0.0 {
            let t = s / gd[j];
            if t < hi {
                hi = t;
                hi_hit = true;
            }
        } else if gd[j] < 0.0 {
            let t = s / gd[j];
            if t > lo {
                lo = t;
                lo_hit = true;
            }
        }
    }
    (lo, hi, lo_hit, hi_hit)
}

fn hit_and_run(
    s: &SetSpec,
    h: &HPolyhedron,
    start: Vector,
    vertices: Option<&[Vector]>,
    req: &SampleRequest,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Sample>,
) -> Result<()> {
    let n = h.dim();
    let row_min = (0..h.n_rows()).map(|j| h.g.row(j).norm()).filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let mut cap = 10.0 * start.norm().max(1.0).max(h.b.amax() / row_min.max(f64::MIN_POSITIVE));
    if let Some(vs) = vertices {
        cap = cap.max(10.0 * vs.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    let mut p = start;
    for _ in 0..50 {
        let d = gaussian(rng, n);
        let (lo, hi, _, _) = chord(h, &p, &d, cap);
        if hi > lo {
            p += d * rng.random_range(lo..=hi);
        }
    }

    let (mut accepted, mut attempts) = (0, 0);
    while accepted < req.n_interior {
        attempts += 1;
        let d = gaussian(rng, n);
        let (lo, hi, _, _) = chord(h, &p, &d, cap);
        if hi > lo {
            p += d * rng.random_range(lo..=hi);
            let location = classify_point(s, &p, req.tol)?;
            if location.kind == LocationKind::Inside {
                out.push(Sample { point: p.clone(), location });
                accepted += 1;
                continue;
            }
        }
        if exhausted(accepted, attempts) {
            return Err(Error::SamplingExhausted { accepted, attempts });
        }
    }

    let (mut accepted, mut attempts) = (0, 0);
    if let Some(vs) = vertices {
        for v in vs.iter().take(req.n_boundary) {
            let location = classify_point(s, v, req.tol)?;
            if location.kind == LocationKind::Boundary {
                out.push(Sample { point: v.clone(), location });
                accepted += 1;
            }
        }
    }
    while accepted < req.n_boundary {
        attempts += 1;
        let d = gaussian(rng, n);
        let (lo, hi, lo_hit, hi_hit) = chord(h, &p, &d, cap);
        let end = if rng.random::<bool>() { (hi, hi_hit) } else { (lo, lo_hit) };
        if end.1 {
            let x = &p + &d * end.0;
            let location = classify_point(s, &x, req.tol)?;
            if location.kind == LocationKind::Boundary {
                out.push(Sample { point: x, location });
                accepted += 1;
            }
        }
        if hi > lo {
            p += &d * rng.random_range(lo..=hi);
        }
        if accepted < req.n_boundary && exhausted(accepted, attempts) {
            return Err(Error::SamplingExhausted { accepted, attempts });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn diag(xs: &[f64]) -> Matrix {
        Matrix::from_diagonal(&v(xs))
    }

    fn example2_cone() -> SetSpec {
        LorenzCone::new(diag(&[1.0, 1.0, -1.0])).unwrap().into()
    }

    fn unit_square() -> SetSpec {
        PolyhedronPair::bounding_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap().into()
    }

    #[test]
    fn validate_examples() {
        assert!(validate_set(&Ellipsoid::unit_ball(2).into(), 1e-9).passed);

        let r = validate_set(&example2_cone(), 1e-9);
        assert!(r.passed, "{:?}", r.failures);
        let i = r.inertia.unwrap();
        assert_eq!((i.n_plus, i.n_zero, i.n_minus), (2, 0, 1));
        if let SetSpec::LorenzCone(c) = example2_cone() {
            assert_eq!(c.axis(), &v(&[0.0, 0.0, 1.0]));
        }

        let r = validate_set(&Ellipsoid::new(diag(&[1.0, -1.0])).unwrap().into(), 1e-9);
        assert!(!r.passed);
        assert!(r.failures[0].invariant.contains("positive definite"));
    }

    #[test]
    fn validate_lorenz_rejects_wrong_inertia_and_axis() {
        let r = validate_set(&LorenzCone::new(diag(&[1.0, -1.0, -1.0])).unwrap().into(), 1e-9);
        assert!(!r.passed);
        let r = validate_set(&LorenzCone::with_axis(diag(&[1.0, 1.0, -1.0]), v(&[1.0, 0.0, 1.0])).unwrap().into(), 1e-9);
        assert!(!r.passed);
    }

    #[test]
    fn validate_pair_consistency() {
        let h = HPolyhedron::bounding_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let bad = PolyhedronPair::new(h.clone(), VPolyhedron::new(vec![v(&[2.0, 0.0])], vec![]).unwrap()).unwrap();
        assert!(!validate_set(&bad.into(), 1e-9).passed);
        let bad_ray = PolyhedronPair::new(h, VPolyhedron::new(vec![v(&[0.0, 0.0])], vec![v(&[1.0, 0.0])]).unwrap()).unwrap();
        assert!(!validate_set(&bad_ray.into(), 1e-9).passed);
        assert!(validate_set(&unit_square(), 1e-9).passed);
    }

    #[test]
    fn validate_empty_h_polyhedron() {
        // x <= 0 and -x <= -1
        let h = HPolyhedron::new(Matrix::from_row_slice(2, 1, &[1.0, -1.0]), v(&[0.0, -1.0])).unwrap();
        assert!(!validate_set(&h.into(), 1e-9).passed);
    }

    #[test]
    fn classify_examples() {
        let disk: SetSpec = Ellipsoid::unit_ball(2).into();
        assert_eq!(classify_point(&disk, &v(&[0.0, 0.0]), 1e-9).unwrap().kind, LocationKind::Inside);
        assert_eq!(classify_point(&disk, &v(&[1.0, 0.0]), 1e-9).unwrap().kind, LocationKind::Boundary);
        assert_eq!(classify_point(&disk, &v(&[1.0, 0.1]), 1e-9).unwrap().kind, LocationKind::Outside);
        let cone = example2_cone();
        assert_eq!(classify_point(&cone, &v(&[1.0, 0.0, 1.0]), 1e-9).unwrap().kind, LocationKind::Boundary);
        assert_eq!(classify_point(&cone, &v(&[0.0, 0.0, 1.0]), 1e-9).unwrap().kind, LocationKind::Inside);
        // opposite nappe
        assert_eq!(classify_point(&cone, &v(&[0.0, 0.0, -1.0]), 1e-9).unwrap().kind, LocationKind::Outside);
        assert!(matches!(classify_point(&disk, &v(&[1.0]), 1e-9), Err(Error::DimensionMismatch { .. })));
        let vp: SetSpec = VPolyhedron::new(vec![v(&[0.0])], vec![]).unwrap().into();
        assert!(matches!(classify_point(&vp, &v(&[0.0]), 1e-9), Err(Error::RequiresHRepresentation)));
    }

    #[test]
    fn cone_base_examples() {
        let b = cone_base(&example2_cone()).unwrap();
        assert!((b.normal.clone() - v(&[0.0, 0.0, 1.0])).amax() < 1e-15);

        let orthant: SetSpec = PolyhedralCone::orthant(2).into();
        let b = cone_base(&orthant).unwrap();
        assert!((b.normal[0] - b.normal[1]).abs() < 1e-15 && b.normal[0] > 0.0);

        let half_plane = PolyhedralCone::new(
            vec![v(&[1.0, 0.0]), v(&[-1.0, 0.0]), v(&[0.0, 1.0])],
            vec![v(&[0.0, -1.0])],
        )
        .unwrap();
        assert!(matches!(cone_base(&half_plane.into()), Err(Error::DegenerateCone)));
    }

    #[test]
    fn cone_base_positive_on_sampled_directions() {
        for cone in [example2_cone(), SetSpec::from(PolyhedralCone::orthant(3))] {
            let b = cone_base(&cone).unwrap();
            let pts = sample_points(&cone, 500, 500, 11).unwrap();
            assert_eq!(pts.len(), 1000);
            assert!(pts.iter().all(|p| b.normal.dot(&p.point) > 0.0));
        }
    }

    #[test]
    fn sample_examples() {
        let disk: SetSpec = Ellipsoid::unit_ball(2).into();
        let pts = sample_points(&disk, 0, 10, 1).unwrap();
        assert!(pts.iter().all(|p| (p.point.norm_squared() - 1.0).abs() <= 1e-9));

        let pts = sample_points(&example2_cone(), 10, 0, 2).unwrap();
        assert!(pts.iter().all(|p| p.point[0].powi(2) + p.point[1].powi(2) < p.point[2].powi(2)));

        let a = sample_points(&unit_square(), 100, 0, 3).unwrap();
        let b = sample_points(&unit_square(), 100, 0, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.point.iter().all(|&x| x > 0.0 && x < 1.0)));
    }

    #[test]
    fn samples_match_their_tags() {
        let h = HPolyhedron::new(
            Matrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            v(&[0.0, 0.0, 1.0]),
        )
        .unwrap();
        let sets: Vec<SetSpec> = vec![
            Ellipsoid::new(Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap().into(),
            example2_cone(),
            LorenzCone::new(diag(&[1.0, -1.0])).unwrap().into(),
            PolyhedralCone::orthant(3).into(),
            unit_square(),
            h.into(),
        ];
        for s in &sets {
            for p in sample_points(s, 200, 200, 5).unwrap() {
                assert_eq!(classify_point(s, &p.point, 1e-9).unwrap().kind, p.location.kind, "{}", s.kind());
            }
        }
    }

    #[test]
    fn sampling_exhausts_on_flat_polyhedron() {
        // the segment {0 <= x <= 1, y = 0} has no interior
        let h = HPolyhedron::bounding_box(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(matches!(sample_points(&h.into(), 10, 0, 1), Err(Error::SamplingExhausted { .. })));
    }

    #[test]
    fn pair_vertices_classify_as_members() {
        let s = unit_square();
        if let SetSpec::PolyhedronPair(p) = &s {
            for x in p.v().vertices() {
                assert!(classify_point(&s, x, 1e-9).unwrap().is_member());
            }
        }
    }

    proptest! {
        #[test]
        fn cone_classification_is_scale_free(x in prop::collection::vec(-5.0f64..5.0, 3), alpha in 1e-3f64..1e3) {
            let x = Vector::from_vec(x);
            for cone in [example2_cone(), SetSpec::from(PolyhedralCone::orthant(3))] {
                let a = classify_point(&cone, &x, 1e-9).unwrap();
                let b = classify_point(&cone, &(&x * alpha), 1e-9).unwrap();
                prop_assert_eq!(a.kind, b.kind);
            }
        }
    }
}
