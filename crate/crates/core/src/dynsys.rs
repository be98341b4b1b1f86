//! Linear systems `x' = Ax`, their exact flow, and discretization step maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{check_finite, check_square, mat_exp, shifted_inverse, solve_shifted, Matrix, Vector};
use crate::sets::{classify_point, LocationKind, SetSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: Matrix,
}

impl LinearSystem {
    pub fn new(a: Matrix) -> Result<Self> {
        check_finite(&a)?;
        check_square(&a)?;
        Ok(Self { a })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn check_vector(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ForwardEuler,
    BackwardEuler,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ForwardEuler => "forward-euler",
            Method::BackwardEuler => "backward-euler",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward-euler" => Ok(Method::ForwardEuler),
            "backward-euler" => Ok(Method::BackwardEuler),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("steplength must be finite and >= 0, got {dt}")));
    }
    Ok(())
}

/// `I + dt*A` for forward Euler, `(I - dt*A)^{-1}` for backward Euler.
pub fn step_matrix(sys: &LinearSystem, m: Method, dt: f64) -> Result<Matrix> {
    check_dt(dt)?;
    let n = sys.dim();
    match m {
        Method::ForwardEuler => Ok(Matrix::identity(n, n) + &sys.a * dt),
        Method::BackwardEuler => shifted_inverse(&sys.a, dt),
    }
}

pub fn forward_step(sys: &LinearSystem, dt: f64, x: &Vector) -> Result<Vector> {
    check_dt(dt)?;
    sys.check_vector(x)?;
    Ok(x + &sys.a * x * dt)
}

pub fn backward_step(sys: &LinearSystem, dt: f64, x: &Vector) -> Result<Vector> {
    check_dt(dt)?;
    sys.check_vector(x)?;
    solve_shifted(&sys.a, dt, x)
}

/// `e^{At} x`.
pub fn exact_flow(sys: &LinearSystem, t: f64, x: &Vector) -> Result<Vector> {
    check_dt(t)?;
    sys.check_vector(x)?;
    Ok(mat_exp(&sys.a, t)? * x)
}

/// Properties a step map declares about itself. They are not inferred; the
/// oracle module spot-checks them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MapAttributes {
    pub linear: bool,
    /// `D(dt, a x) = a^p D(dt, x)` for `a > 0`.
    pub homogeneous_degree: Option<f64>,
    /// Declared bound `L` on `||D(dt, y) - D(dt, x)|| / ||y - x||`.
    pub lipschitz: Option<f64>,
}

/// A discretization `x_{k+1} = D(dt, x_k)`.
pub trait StepMap: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, dt: f64, x: &Vector) -> Result<Vector>;

    fn attributes(&self) -> MapAttributes;

    /// Step matrix for linear maps.
    fn matrix(&self, _dt: f64) -> Option<Result<Matrix>> {
        None
    }

    fn apply_batch(&self, dt: f64, xs: &[Vector]) -> Result<Vec<Vector>> {
        match self.matrix(dt) {
            Some(m) => {
                let m = m?;
                Ok(xs.iter().map(|x| &m * x).collect())
            }
            None => xs.iter().map(|x| self.apply(dt, x)).collect(),
        }
    }
}

/// Forward or backward Euler applied to a linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerMap {
    system: LinearSystem,
    method: Method,
}

impl EulerMap {
    pub fn new(system: LinearSystem, method: Method) -> Self {
        Self { system, method }
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    pub fn method(&self) -> Method {
        self.method
    }
}

impl StepMap for EulerMap {
    fn dim(&self) -> usize {
        self.system.dim()
    }

    fn apply(&self, dt: f64, x: &Vector) -> Result<Vector> {
        match self.method {
            Method::ForwardEuler => forward_step(&self.system, dt, x),
            Method::BackwardEuler => backward_step(&self.system, dt, x),
        }
    }

    fn attributes(&self) -> MapAttributes {
        MapAttributes { linear: true, homogeneous_degree: Some(1.0), lipschitz: None }
    }

    fn matrix(&self, dt: f64) -> Option<Result<Matrix>> {
        Some(step_matrix(&self.system, self.method, dt))
    }
}

/// A step map defined by a closure, for nonlinear discretizations.
pub struct FnStepMap<F> {
    dim: usize,
    f: F,
    attributes: MapAttributes,
}

impl<F> FnStepMap<F>
where
    F: Fn(f64, &Vector) -> Vector + Send + Sync,
{
    pub fn new(dim: usize, attributes: MapAttributes, f: F) -> Self {
        Self { dim, f, attributes }
    }
}

impl<F> StepMap for FnStepMap<F>
where
    F: Fn(f64, &Vector) -> Vector + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, dt: f64, x: &Vector) -> Result<Vector> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok((self.f)(dt, x))
    }

    fn attributes(&self) -> MapAttributes {
        self.attributes
    }
}

/// A linear map given by a fixed matrix, independent of the steplength.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMap {
    m: Matrix,
}

impl MatrixMap {
    pub fn new(m: Matrix) -> Result<Self> {
        check_finite(&m)?;
        check_square(&m)?;
        Ok(Self { m })
    }
}

impl StepMap for MatrixMap {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn apply(&self, _dt: f64, x: &Vector) -> Result<Vector> {
        Ok(&self.m * x)
    }

    fn attributes(&self) -> MapAttributes {
        MapAttributes { linear: true, homogeneous_degree: Some(1.0), lipschitz: None }
    }

    fn matrix(&self, _dt: f64) -> Option<Result<Matrix>> {
        Some(Ok(self.m.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// Membership margins of each state, present when a guard set was given.
    pub margins: Vec<f64>,
    pub first_exit: Option<usize>,
}

/// Iterates `map` for `steps` steps from `x0`, recording the first state
/// that falls outside `guard`.
pub fn simulate(
    map: &dyn StepMap,
    dt: f64,
    x0: &Vector,
    steps: usize,
    guard: Option<&SetSpec>,
    tol: f64,
) -> Result<Trajectory> {
    check_dt(dt)?;
    if x0.len() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), found: x0.len() });
    }
    let matrix = map.matrix(dt).transpose()?;
    let mut traj = Trajectory { states: Vec::with_capacity(steps + 1), margins: Vec::new(), first_exit: None };
    let mut x = x0.clone();
    for k in 0..=steps {
        if k > 0 {
            x = match &matrix {
                Some(m) => m * &x,
                None => map.apply(dt, &x)?,
            };
        }
        if let Some(g) = guard {
            let loc = classify_point(g, &x, tol)?;
            traj.margins.push(loc.margin);
            if loc.kind == LocationKind::Outside && traj.first_exit.is_none() {
                traj.first_exit = Some(k);
            }
        }
        traj.states.push(x.iter().copied().collect());
    }
    Ok(traj)
}
