#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use steplen::numkernel::{Matrix, Vector};
use steplen::sets::{Ellipsoid, LorenzCone, PolyhedronPair, SetSpec};

pub fn mat(r: usize, c: usize, d: &[f64]) -> Matrix {
    Matrix::from_row_slice(r, c, d)
}

pub fn diag(d: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(d))
}

/// Planar rotation generator on the unit disk.
pub fn rotation() -> (Matrix, SetSpec) {
    (mat(2, 2, &[0.0, -1.0, 1.0, 0.0]), Ellipsoid::unit_ball(2).into())
}

/// Spiral source in the plane plus growth along the axis of the ice-cream cone.
pub fn spiral_cone() -> (Matrix, SetSpec) {
    let a = mat(3, 3, &[1.0, -1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    (a, LorenzCone::new(diag(&[1.0, 1.0, -1.0])).unwrap().into())
}

/// Symmetric system with eigenvalues 4 and 2 whose eigenvectors span the
/// edges of the planar cone `xi^2 <= eta^2, eta >= 0`.
pub fn wedge() -> (Matrix, SetSpec) {
    let a = mat(2, 2, &[3.0, -1.0, -1.0, 3.0]);
    (a, LorenzCone::new(diag(&[1.0, -1.0])).unwrap().into())
}

pub fn unit_square() -> PolyhedronPair {
    PolyhedronPair::bounding_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// A flow-invariant ellipsoid instance: `Q` positive definite and
/// `A = Q^{-1}(W - S)` with `W` skew and `S` positive semidefinite, so
/// `A^T Q + Q A = -2S`.
pub struct FlowInvariant {
    pub a: Matrix,
    pub q: Matrix,
    pub s: Matrix,
}

pub fn flow_invariant(rng: &mut ChaCha8Rng, n: usize, s_rank: usize) -> FlowInvariant {
    let l = gaussian(rng, n, n);
    let q = &l * l.transpose() / n as f64 + Matrix::identity(n, n) * 0.2;
    let w = gaussian(rng, n, n);
    let w = &w - w.transpose();
    let f = gaussian(rng, n, s_rank);
    let s = &f * f.transpose();
    let a = q.clone().try_inverse().unwrap() * (w - &s);
    FlowInvariant { a, q, s }
}

pub fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    let v = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
    v.normalize()
}
