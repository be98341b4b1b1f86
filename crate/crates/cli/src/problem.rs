//! Problem documents: JSON input, built-in examples and validation.

use serde::Deserialize;
use steplen::dynsys::Method;
use steplen::numkernel::{Matrix, Vector};
use steplen::sets::{
    validate_set, Ellipsoid, HPolyhedron, LorenzCone, PolyhedralCone, PolyhedronPair, SetSpec, VPolyhedron,
    DEFAULT_MEMBERSHIP_TOL,
};
use steplen::thresholds::DEFAULT_TOL_DT;

use crate::CliError;

pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    system: RawSystem,
    set: Option<RawSet>,
    method: Option<Method>,
    point: Option<Vec<f64>>,
    dt: Option<f64>,
    steps: Option<usize>,
    samples: Option<usize>,
    seed: Option<u64>,
    dt_max: Option<f64>,
    assume_invariant: Option<bool>,
    tol: Option<f64>,
    tol_dt: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(rename = "A")]
    a: Option<Vec<Vec<f64>>>,
    example: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum RawSet {
    Ellipsoid {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
    },
    HPolyhedron {
        #[serde(rename = "G")]
        g: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    VPolyhedron {
        vertices: Vec<Vec<f64>>,
        #[serde(default)]
        rays: Vec<Vec<f64>>,
    },
    PolyhedronPair {
        #[serde(rename = "G")]
        g: Vec<Vec<f64>>,
        b: Vec<f64>,
        vertices: Vec<Vec<f64>>,
        #[serde(default)]
        rays: Vec<Vec<f64>>,
    },
    LorenzCone {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        axis: Option<Vec<f64>>,
    },
    PolyhedralCone {
        rays: Vec<Vec<f64>>,
        facet_normals: Vec<Vec<f64>>,
    },
}

/// A validated problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub a: Matrix,
    pub set: SetSpec,
    pub example: Option<String>,
    pub method: Method,
    pub point: Option<Vector>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub samples: Option<usize>,
    pub seed: u64,
    pub dt_max: Option<f64>,
    pub assume_invariant: bool,
    pub tol: f64,
    pub tol_dt: f64,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub tol: Option<f64>,
    pub tol_dt: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub point: Option<Vec<f64>>,
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<Matrix, CliError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(CliError::Parse(format!("field `{field}`: empty matrix")));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(CliError::Parse(format!("field `{field}`: rows have unequal length")));
    }
    Ok(Matrix::from_row_iterator(n, m, rows.iter().flatten().copied()))
}

fn vectors(rows: &[Vec<f64>]) -> Vec<Vector> {
    rows.iter().map(|r| Vector::from_column_slice(r)).collect()
}

fn lib(field: &str) -> impl Fn(steplen::Error) -> CliError + '_ {
    move |e| CliError::Validation(vec![format!("{field}: {e}")])
}

fn build_set(raw: RawSet) -> Result<SetSpec, CliError> {
    Ok(match raw {
        RawSet::Ellipsoid { q } => Ellipsoid::new(matrix("set.Q", &q)?).map_err(lib("set.Q"))?.into(),
        RawSet::HPolyhedron { g, b } => {
            HPolyhedron::new(matrix("set.G", &g)?, Vector::from_vec(b)).map_err(lib("set"))?.into()
        }
        RawSet::VPolyhedron { vertices, rays } => {
            VPolyhedron::new(vectors(&vertices), vectors(&rays)).map_err(lib("set"))?.into()
        }
        RawSet::PolyhedronPair { g, b, vertices, rays } => {
            let h = HPolyhedron::new(matrix("set.G", &g)?, Vector::from_vec(b)).map_err(lib("set"))?;
            let v = VPolyhedron::new(vectors(&vertices), vectors(&rays)).map_err(lib("set"))?;
            PolyhedronPair::new(h, v).map_err(lib("set"))?.into()
        }
        RawSet::LorenzCone { q, axis } => {
            let q = matrix("set.Q", &q)?;
            match axis {
                Some(u) => LorenzCone::with_axis(q, Vector::from_vec(u)).map_err(lib("set.axis"))?.into(),
                None => LorenzCone::new(q).map_err(lib("set.Q"))?.into(),
            }
        }
        RawSet::PolyhedralCone { rays, facet_normals } => {
            PolyhedralCone::new(vectors(&rays), vectors(&facet_normals)).map_err(lib("set"))?.into()
        }
    })
}

/// System matrix and invariant set of a named built-in example.
pub fn builtin(name: &str) -> Result<(Matrix, SetSpec), CliError> {
    let diag = |d: &[f64]| Matrix::from_diagonal(&Vector::from_column_slice(d));
    let cone = |q: Matrix| -> SetSpec { LorenzCone::new(q).expect("built-in cone").into() };
    Ok(match name {
        "example1" => (Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]), Ellipsoid::unit_ball(2).into()),
        "example2" => (
            Matrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            cone(diag(&[1.0, 1.0, -1.0])),
        ),
        "example3" => (Matrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 3.0]), cone(diag(&[1.0, -1.0]))),
        other => {
            return Err(CliError::Parse(format!(
                "field `system.example`: unknown example {other:?} (expected example1, example2 or example3)"
            )))
        }
    })
}

/// Parses and validates a problem document.
pub fn parse_spec(text: &str, over: &Overrides) -> Result<ProblemSpec, CliError> {
    let raw: RawSpec = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let (a, default_set, example) = match (raw.system.a, raw.system.example) {
        (Some(_), Some(_)) => {
            return Err(CliError::Parse("field `system`: give either `A` or `example`, not both".into()))
        }
        (Some(rows), None) => (matrix("system.A", &rows)?, None, None),
        (None, Some(name)) => {
            let (a, s) = builtin(&name)?;
            (a, Some(s), Some(name))
        }
        (None, None) => return Err(CliError::Parse("field `system`: missing `A` or `example`".into())),
    };
    let set = match raw.set {
        Some(s) => build_set(s)?,
        None => default_set.ok_or_else(|| CliError::Parse("missing field `set`".into()))?,
    };
    let spec = ProblemSpec {
        a,
        set,
        method: over.method.or(raw.method).unwrap_or(Method::BackwardEuler),
        point: over.point.clone().or(raw.point).map(Vector::from_vec),
        dt: over.dt.or(raw.dt),
        steps: over.steps.or(raw.steps),
        samples: over.samples.or(raw.samples),
        seed: over.seed.or(raw.seed).unwrap_or(0),
        dt_max: raw.dt_max,
        // the built-in examples are known to be flow-invariant
        assume_invariant: raw.assume_invariant.unwrap_or(example.is_some()),
        tol: over.tol.or(raw.tol).unwrap_or(DEFAULT_MEMBERSHIP_TOL),
        tol_dt: over.tol_dt.or(raw.tol_dt).unwrap_or(DEFAULT_TOL_DT),
        example,
    };
    validate(&spec)?;
    Ok(spec)
}

fn validate(spec: &ProblemSpec) -> Result<(), CliError> {
    let mut bad = Vec::new();
    let n = spec.set.dim();
    if spec.a.nrows() != spec.a.ncols() {
        bad.push(format!("system.A is {}x{}, expected square", spec.a.nrows(), spec.a.ncols()));
    } else if spec.a.nrows() != n {
        bad.push(format!("system.A has dimension {} but the set has dimension {n}", spec.a.nrows()));
    }
    if spec.a.iter().any(|v| !v.is_finite()) {
        bad.push("system.A has non-finite entries".into());
    }
    if let Some(p) = &spec.point {
        if p.len() != n {
            bad.push(format!("point has dimension {} but the set has dimension {n}", p.len()));
        }
    }
    if !(spec.tol > 0.0) {
        bad.push(format!("tol must be positive, got {}", spec.tol));
    }
    if !(spec.tol_dt > 0.0) {
        bad.push(format!("tol_dt must be positive, got {}", spec.tol_dt));
    }
    if let Some(dt) = spec.dt {
        if !(dt >= 0.0 && dt.is_finite()) {
            bad.push(format!("dt must be nonnegative and finite, got {dt}"));
        }
    }
    if let Some(d) = spec.dt_max {
        if !(d > 0.0 && d.is_finite()) {
            bad.push(format!("dt_max must be positive and finite, got {d}"));
        }
    }
    let report = validate_set(&spec.set, spec.tol);
    bad.extend(report.failures.iter().map(|f| f.invariant.clone()));
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(bad))
    }
}
