//! Brute-force verification by sampling, and empirical steplength estimates
//! for arbitrary step maps. Results here are estimates, never certificates.

use serde::{Deserialize, Serialize};

use crate::dynsys::StepMap;
use crate::error::{Error, Result};
use crate::numkernel::{shifted, spectral_norm, Matrix, Vector};
use crate::sets::{sample_points_with, ConeScaling, LocationKind, SampleRequest, SetSpec};
use crate::thresholds::{ThresholdKind, ThresholdReport};

const MAX_WITNESSES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub image: Vec<f64>,
    #[serde(with = "crate::real")]
    pub image_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    #[serde(with = "crate::real")]
    pub dt: f64,
    pub samples: usize,
    pub seed: u64,
    pub violations: usize,
    /// The worst violators, most negative image margin first.
    pub witnesses: Vec<Witness>,
    /// Largest `-margin` over all images; positive when something left the set.
    #[serde(with = "crate::real")]
    pub max_excursion: f64,
    /// Images within `tol` of the boundary.
    pub boundary_grazing: usize,
}

fn draw(s: &SetSpec, n: usize, seed: u64, tol: f64, scaling: ConeScaling) -> Result<Vec<Vector>> {
    let mut req = SampleRequest::new(n / 2, n - n / 2, seed);
    req.tol = tol;
    req.cone_scaling = scaling;
    Ok(sample_points_with(s, &req)?.into_iter().map(|p| p.point).collect())
}

fn verify_points(map: &dyn StepMap, dt: f64, s: &SetSpec, points: &[Vector], seed: u64, tol: f64) -> Result<VerifyReport> {
    let images = map.apply_batch(dt, points)?;
    let mut scored = Vec::with_capacity(points.len());
    let mut max_excursion = f64::NEG_INFINITY;
    let mut grazing = 0;
    for (i, y) in images.iter().enumerate() {
        let m = s.margin(y)?;
        let m = if m.is_nan() { f64::NEG_INFINITY } else { m };
        max_excursion = max_excursion.max(-m);
        if m.abs() <= tol {
            grazing += 1;
        }
        if m < -tol {
            scored.push((i, m));
        }
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    let witnesses = scored
        .iter()
        .take(MAX_WITNESSES)
        .map(|&(i, m)| Witness {
            point: points[i].iter().copied().collect(),
            image: images[i].iter().copied().collect(),
            image_margin: m,
        })
        .collect();
    Ok(VerifyReport {
        dt,
        samples: points.len(),
        seed,
        violations: scored.len(),
        witnesses,
        max_excursion,
        boundary_grazing: grazing,
    })
}

/// Applies one step to `n` sampled points of `s` (half interior, half
/// boundary) and counts images that land outside beyond `tol`.
pub fn sample_verify(map: &dyn StepMap, dt: f64, s: &SetSpec, n: usize, seed: u64, tol: f64) -> Result<VerifyReport> {
    if map.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), found: map.dim() });
    }
    let points = draw(s, n, seed, tol, ConeScaling::Random)?;
    verify_points(map, dt, s, &points, seed, tol)
}

#[derive(Debug, Clone, Copy)]
pub struct EmpiricalRequest {
    pub samples: usize,
    pub dt_hi: f64,
    pub seed: u64,
    pub tol: f64,
    pub tol_dt: f64,
    /// Sample cones at random scales instead of on the base slice.
    pub full_cone: bool,
}

impl EmpiricalRequest {
    pub fn new(samples: usize, dt_hi: f64, seed: u64) -> Self {
        Self { samples, dt_hi, seed, tol: crate::sets::DEFAULT_MEMBERSHIP_TOL, tol_dt: 1e-9, full_cone: false }
    }
}

pub fn empirical_threshold(map: &dyn StepMap, s: &SetSpec, n: usize, dt_hi: f64, seed: u64, tol: f64) -> Result<ThresholdReport> {
    let mut req = EmpiricalRequest::new(n, dt_hi, seed);
    req.tol = tol;
    empirical_threshold_with(map, s, &req)
}

/// Largest `dt` in `[0, dt_hi]` for which a fixed sample of `s` maps into
/// `s`, found by bisection. For cones the map must declare a homogeneity
/// degree, which reduces the search to the base slice.
pub fn empirical_threshold_with(map: &dyn StepMap, s: &SetSpec, req: &EmpiricalRequest) -> Result<ThresholdReport> {
    if map.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), found: map.dim() });
    }
    if !(req.dt_hi > 0.0 && req.dt_hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt_hi must be positive and finite, got {}", req.dt_hi)));
    }
    let attrs = map.attributes();
    let mut notes = Vec::new();
    let scaling = if s.is_cone() {
        match attrs.homogeneous_degree {
            Some(p) if p >= 1.0 => {}
            Some(p) => return Err(Error::UndeclaredAttribute(format!("homogeneity degree {p} < 1 on a cone"))),
            None => return Err(Error::UndeclaredAttribute("cones need a declared homogeneity degree".into())),
        }
        if req.full_cone {
            notes.push("full-cone sampling".to_string());
            ConeScaling::Random
        } else {
            notes.push("sampled on the cone base; extended to the cone by homogeneity".to_string());
            ConeScaling::Base
        }
    } else {
        if attrs.lipschitz.is_none() {
            notes.push("no Lipschitz bound declared; estimate carries lower confidence".to_string());
        }
        ConeScaling::Random
    };
    let points = draw(s, req.samples, req.seed, req.tol, scaling)?;
    notes.extend(spot_check(map, s, &points, req));

    let mut evaluations = 0usize;
    let mut pred = |dt: f64| -> Result<bool> {
        evaluations += 1;
        match verify_points(map, dt, s, &points, req.seed, req.tol) {
            Ok(r) => Ok(r.violations == 0),
            Err(Error::SingularShift { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    if !pred(0.0)? {
        return Err(Error::PredicateFalseAtZero);
    }
    let value = if pred(req.dt_hi)? {
        notes.push("no violation found up to dt_hi; unbounded within search".to_string());
        req.dt_hi
    } else {
        let (mut lo, mut hi) = (0.0f64, req.dt_hi);
        while hi - lo > req.tol_dt {
            let mid = 0.5 * (lo + hi);
            if pred(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let at_value = verify_points(map, value, s, &points, req.seed, req.tol).ok();
    let mut r = ThresholdReport::new(ThresholdKind::Empirical, value, true, "sampled bisection; an estimate, not a certificate")
        .diag("samples", points.len() as f64)
        .diag("seed", req.seed as f64)
        .diag("dt_hi", req.dt_hi)
        .diag("evaluations", evaluations as f64);
    if let Some(l) = attrs.lipschitz {
        r = r.diag("declared_lipschitz", l);
    }
    if let Some(p) = attrs.homogeneous_degree {
        r = r.diag("declared_homogeneity", p);
    }
    if let Some(v) = at_value {
        r = r.diag("boundary_grazing", v.boundary_grazing as f64);
        if v.boundary_grazing > 0 {
            notes.push(format!("{} images lie within tol of the boundary at the estimate", v.boundary_grazing));
        }
    }
    r.notes = notes;
    Ok(r)
}

/// Tests declared attributes on a handful of points and reports contradictions.
fn spot_check(map: &dyn StepMap, s: &SetSpec, points: &[Vector], req: &EmpiricalRequest) -> Vec<String> {
    let attrs = map.attributes();
    let dt = req.dt_hi * 1e-3;
    let pts: Vec<&Vector> = points.iter().step_by((points.len() / 8).max(1)).take(8).collect();
    let close = |a: &Vector, b: &Vector| (a - b).norm() <= 1e-8 * (1.0 + a.norm().max(b.norm()));
    let mut out = Vec::new();
    if let Some(p) = attrs.homogeneous_degree {
        let bad = pts.iter().any(|x| match (map.apply(dt, x), map.apply(dt, &(*x * 2.0))) {
            (Ok(y), Ok(y2)) => !close(&(y * 2f64.powf(p)), &y2),
            _ => false,
        });
        if bad {
            out.push(format!("declared homogeneity degree {p} contradicted by spot check"));
        }
    }
    if attrs.linear {
        let bad = pts.windows(2).any(|w| match (map.apply(dt, w[0]), map.apply(dt, w[1]), map.apply(dt, &(w[0] + w[1]))) {
            (Ok(a), Ok(b), Ok(c)) => !close(&(a + b), &c),
            _ => false,
        });
        if bad {
            out.push("declared linearity contradicted by spot check".to_string());
        }
    }
    if let Some(l) = attrs.lipschitz {
        if let Ok(est) = lipschitz_estimate(map, s, dt, 256, req.seed) {
            if est > l * (1.0 + 1e-9) {
                out.push(format!("declared Lipschitz bound {l} below sampled quotient {est}"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SingularInterval {
    pub fn contains(&self, dt: f64, slack: f64) -> bool {
        dt >= self.lo - slack && dt <= self.hi + slack
    }
}

/// Grid scan of `det(I - dt A)` on `[0, dt_hi]` for sign changes and
/// near-zeros, merged into intervals.
pub fn singularity_scan(a: &Matrix, dt_hi: f64, grid: usize, tol: f64) -> Result<Vec<SingularInterval>> {
    if grid < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    crate::numkernel::check_square(a)?;
    let n = a.nrows() as i32;
    let a_norm = spectral_norm(a);
    let dts: Vec<f64> = (0..grid).map(|i| dt_hi * i as f64 / (grid - 1) as f64).collect();
    let dets: Vec<f64> = dts.iter().map(|&dt| shifted(a, dt).determinant()).collect();
    // hits on adjacent grid points belong to one interval
    let mut hits: Vec<(usize, usize)> = Vec::new();
    let mut push = |lo: usize, hi: usize| match hits.last_mut() {
        Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
        _ => hits.push((lo, hi)),
    };
    for i in 0..grid {
        let scale = (1.0 + dts[i] * a_norm).powi(n);
        if dets[i].abs() <= tol * scale {
            push(i, i);
        }
        if i + 1 < grid && dets[i] * dets[i + 1] < 0.0 {
            push(i, i + 1);
        }
    }
    let hits = hits.into_iter().map(|(lo, hi)| SingularInterval { lo: dts[lo], hi: dts[hi] }).collect();
    Ok(hits)
}

/// Largest difference quotient `||D(y) - D(x)|| / ||y - x||` over sampled
/// pairs: a lower bound on the Lipschitz constant of the map on `s`.
pub fn lipschitz_estimate(map: &dyn StepMap, s: &SetSpec, dt: f64, n_pairs: usize, seed: u64) -> Result<f64> {
    let scaling = if s.is_cone() { ConeScaling::Base } else { ConeScaling::Random };
    let pts = draw(s, 2 * n_pairs, seed, crate::sets::DEFAULT_MEMBERSHIP_TOL, scaling)?;
    // pair interior points with boundary points and with each other
    let half = pts.len() / 2;
    let images = map.apply_batch(dt, &pts)?;
    let mut best = 0.0f64;
    for i in 0..n_pairs.min(half) {
        for (x, y) in [(i, half + i), (i, (i + 1) % half.max(1)), (half + i, half + (i + 1) % half.max(1))] {
            if y >= pts.len() || x == y {
                continue;
            }
            let d = (&pts[x] - &pts[y]).norm();
            if d > 1e-12 {
                best = best.max((&images[x] - &images[y]).norm() / d);
            }
        }
    }
    Ok(best)
}

/// Location of a single image, for callers re-checking a witness.
pub fn image_location(map: &dyn StepMap, dt: f64, s: &SetSpec, x: &Vector, tol: f64) -> Result<LocationKind> {
    let y = map.apply(dt, x)?;
    Ok(crate::sets::classify_point(s, &y, tol)?.kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{EulerMap, FnStepMap, LinearSystem, MapAttributes, MatrixMap, Method};
    use crate::sets::{Ellipsoid, LorenzCone, PolyhedronPair};

    fn mat(r: usize, c: usize, d: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, d)
    }

    fn euler(a: Matrix, m: Method) -> EulerMap {
        EulerMap::new(LinearSystem::new(a).unwrap(), m)
    }

    fn rot() -> Matrix {
        mat(2, 2, &[0.0, -1.0, 1.0, 0.0])
    }

    fn disk() -> SetSpec {
        Ellipsoid::unit_ball(2).into()
    }

    fn ex3() -> (Matrix, SetSpec) {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        (mat(2, 2, &[3.0, -1.0, -1.0, 3.0]), LorenzCone::new(q).unwrap().into())
    }

    #[test]
    fn verify_rotation() {
        let r = sample_verify(&euler(rot(), Method::BackwardEuler), 0.7, &disk(), 10_000, 1, 1e-9).unwrap();
        assert_eq!(r.violations, 0);
        let r = sample_verify(&euler(rot(), Method::ForwardEuler), 0.1, &disk(), 10_000, 1, 1e-9).unwrap();
        assert!(r.violations > 0);
        assert!(r.witnesses.len() <= MAX_WITNESSES);
        for w in &r.witnesses {
            let x = Vector::from_column_slice(&w.point);
            assert!((x.norm() - 1.0).abs() < 1e-6);
        }
        let id = MatrixMap::new(Matrix::identity(2, 2)).unwrap();
        assert_eq!(sample_verify(&id, 0.0, &disk(), 1000, 1, 1e-9).unwrap().violations, 0);
    }

    #[test]
    fn empirical_examples() {
        let (a, c) = ex3();
        let r = empirical_threshold(&euler(a, Method::BackwardEuler), &c, 10_000, 1.0, 3, 1e-9).unwrap();
        assert!((0.2499..=0.2501).contains(&r.value), "{}", r.value);
        assert_eq!(r.kind, ThresholdKind::Empirical);

        let r = empirical_threshold(&euler(rot(), Method::BackwardEuler), &disk(), 2000, 1e3, 3, 1e-9).unwrap();
        assert_eq!(r.value, 1e3);
        assert!(r.notes.iter().any(|n| n.contains("unbounded within search")));
    }

    #[test]
    fn empirical_needs_declared_homogeneity_on_cones() {
        let (_, c) = ex3();
        let f = FnStepMap::new(2, MapAttributes::default(), |_dt, x: &Vector| x.clone());
        assert!(matches!(empirical_threshold(&f, &c, 100, 1.0, 0, 1e-9), Err(Error::UndeclaredAttribute(_))));
    }

    #[test]
    fn empirical_reports_contradicted_attributes() {
        let attrs = MapAttributes { linear: true, homogeneous_degree: Some(1.0), lipschitz: Some(0.5) };
        let f = FnStepMap::new(2, attrs, |dt, x: &Vector| x * (1.0 - dt) + Vector::from_vec(vec![0.0, dt * x[0] * x[0]]));
        let sq: SetSpec = PolyhedronPair::bounding_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap().into();
        let r = empirical_threshold(&f, &sq, 500, 1.0, 0, 1e-9).unwrap();
        assert!(r.notes.iter().any(|n| n.contains("homogeneity")));
        assert!(r.notes.iter().any(|n| n.contains("linearity")));
        assert!(r.notes.iter().any(|n| n.contains("Lipschitz")));
    }

    #[test]
    fn singularity_scan_examples() {
        let hits = singularity_scan(&ex3().0, 1.0, 100_000, 1e-12).unwrap();
        assert_eq!(hits.len(), 2, "{hits:?}");
        assert!(hits[0].contains(0.25, 1e-5) && hits[1].contains(0.5, 1e-5));
        assert!(singularity_scan(&rot(), 10.0, 10_000, 1e-12).unwrap().is_empty());
        assert!(singularity_scan(&Matrix::zeros(2, 2), 10.0, 1000, 1e-12).unwrap().is_empty());
        // double root without a sign change
        let hits = singularity_scan(&Matrix::identity(2, 2), 2.0, 100_001, 1e-10).unwrap();
        assert_eq!(hits.len(), 1);
        assert!(hits[0].contains(1.0, 1e-4));
    }

    #[test]
    fn lipschitz_examples() {
        let m = mat(2, 2, &[2.0, 1.0, 0.0, 0.5]);
        let norm = spectral_norm(&m);
        let est = lipschitz_estimate(&MatrixMap::new(m).unwrap(), &disk(), 0.0, 10_000, 1).unwrap();
        assert!(est <= norm * (1.0 + 1e-12) && est >= 0.9 * norm);
        let id = MatrixMap::new(Matrix::identity(2, 2)).unwrap();
        let est = lipschitz_estimate(&id, &disk(), 0.0, 1000, 1).unwrap();
        assert!((0.99..=1.0 + 1e-12).contains(&est));
        let c = FnStepMap::new(2, MapAttributes::default(), |_dt, _x: &Vector| Vector::from_vec(vec![1.0, 2.0]));
        assert_eq!(lipschitz_estimate(&c, &disk(), 0.0, 1000, 1).unwrap(), 0.0);
    }
}
