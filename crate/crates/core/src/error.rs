use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix has a non-finite entry or an empty dimension")]
    InvalidMatrix,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("matrix exponential overflowed")]
    Overflow,
    #[error("I - dt*A is singular at dt = {dt}")]
    SingularShift { dt: f64 },
    #[error("set is invalid: {0}")]
    InvalidSet(String),
    #[error("operation needs an H-representation; supply a polyhedron pair")]
    RequiresHRepresentation,
    #[error("cone is not pointed: no base hyperplane found")]
    DegenerateCone,
    #[error("sampling exhausted: accepted {accepted} of {attempts} proposals")]
    SamplingExhausted { accepted: usize, attempts: usize },
    #[error("inconsistent dual description: {0}")]
    InconsistentPair(String),
    #[error("point is not in the set (margin {margin:.3e})")]
    NotInSet { margin: f64 },
    #[error("branch precondition failed: {0}")]
    BranchPreconditionFailed(String),
    #[error("set is not invariant for the continuous system: {0}")]
    NotFlowInvariant(String),
    #[error("discrete invariance check fails already at dt = 0")]
    PredicateFalseAtZero,
    #[error("step map does not declare the attributes this analysis needs: {0}")]
    UndeclaredAttribute(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operation not supported for this set: {0}")]
    Unsupported(String),
}
