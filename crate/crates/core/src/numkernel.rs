//! Dense linear-algebra substrate.
//!
//! Thin wrappers over `nalgebra` that add the checks the rest of the crate
//! relies on: symmetry validation, tolerance-banded definiteness and inertia,
//! and a singularity-aware shifted solve for the backward Euler map.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative width of the band in which an eigenvalue counts as zero.
pub const DEFAULT_EIG_TOL: f64 = 1e-9;

/// `I - dt*A` is treated as singular when `sigma_min <= SINGULAR_RCOND * sigma_max`.
pub const SINGULAR_RCOND: f64 = 64.0 * f64::EPSILON;

const MAX_EIGEN_ITERS: usize = 10_000;

/// Eigenvalues (with multiplicity) and, when available, eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Option<Matrix>,
}

impl Spectrum {
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues whose imaginary part is negligible relative to their modulus.
    pub fn real_eigenvalues(&self, tol: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .filter(|l| l.im.abs() <= tol * l.norm().max(1.0))
            .map(|l| l.re)
            .collect()
    }
}

/// Real spectrum of a symmetric matrix, sorted in descending order, with
/// orthonormal eigenvectors stored column-wise in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSpectrum {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricSpectrum {
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn vector(&self, i: usize) -> Vector {
        self.vectors.column(i).into_owned()
    }

    pub fn to_spectrum(&self) -> Spectrum {
        Spectrum {
            eigenvalues: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            eigenvectors: Some(self.vectors.clone()),
        }
    }

    pub fn reconstruct(&self) -> Matrix {
        let d = Matrix::from_diagonal(&Vector::from_column_slice(&self.values));
        &self.vectors * d * self.vectors.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DefinitenessClass {
    PositiveDefinite,
    PositiveSemidefinite,
    NegativeSemidefinite,
    NegativeDefinite,
    Indefinite,
}

/// Definiteness verdict together with the eigenvalue data needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Definiteness {
    pub class: DefinitenessClass,
    pub inertia: Inertia,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Eigenvalue closest to the zero band, i.e. the one that decides the verdict.
    pub min_margin_eigenvalue: f64,
    /// Half-width of the zero band actually used.
    pub zero_band: f64,
}

impl Definiteness {
    pub fn is_psd(&self) -> bool {
        self.inertia.n_minus == 0
    }

    pub fn is_nsd(&self) -> bool {
        self.inertia.n_plus == 0
    }

    pub fn is_pd(&self) -> bool {
        self.class == DefinitenessClass::PositiveDefinite
    }

    pub fn is_nd(&self) -> bool {
        self.class == DefinitenessClass::NegativeDefinite
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub n_plus: usize,
    pub n_zero: usize,
    pub n_minus: usize,
}

impl Inertia {
    pub fn dim(&self) -> usize {
        self.n_plus + self.n_zero + self.n_minus
    }
}

pub fn check_finite(m: &Matrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix);
    }
    Ok(())
}

pub fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(())
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Largest absolute difference between mirrored entries.
pub fn asymmetry(s: &Matrix) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

fn symmetrized(s: &Matrix, tol: f64) -> Result<Matrix> {
    check_finite(s)?;
    check_square(s)?;
    let asym = asymmetry(s);
    if asym > tol * max_abs(s).max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok((s + s.transpose()) * 0.5)
}

pub fn sym_eigen(s: &Matrix, tol: f64) -> Result<SymmetricSpectrum> {
    let sym = symmetrized(s, tol)?;
    let n = sym.nrows();
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, MAX_EIGEN_ITERS).ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymmetricSpectrum { values, vectors })
}

/// Full complex spectrum of a square matrix via the real Schur form.
///
/// Eigenvalues are ordered by descending real part, then descending imaginary part.
pub fn general_spectrum(a: &Matrix) -> Result<Spectrum> {
    check_finite(a)?;
    check_square(a)?;
    let schur = Schur::try_new(a.clone(), f64::EPSILON, MAX_EIGEN_ITERS).ok_or(Error::NoConvergence)?;
    let mut eigenvalues: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(Spectrum { eigenvalues, eigenvectors: None })
}

fn classify_spectrum(values: &[f64], scale: f64, tol: f64) -> Definiteness {
    let band = tol * scale.max(1.0);
    let mut inertia = Inertia { n_plus: 0, n_zero: 0, n_minus: 0 };
    for &v in values {
        if v > band {
            inertia.n_plus += 1;
        } else if v < -band {
            inertia.n_minus += 1;
        } else {
            inertia.n_zero += 1;
        }
    }
    let class = match inertia {
        Inertia { n_zero: 0, n_minus: 0, .. } => DefinitenessClass::PositiveDefinite,
        Inertia { n_zero: 0, n_plus: 0, .. } => DefinitenessClass::NegativeDefinite,
        Inertia { n_minus: 0, .. } => DefinitenessClass::PositiveSemidefinite,
        Inertia { n_plus: 0, .. } => DefinitenessClass::NegativeSemidefinite,
        _ => DefinitenessClass::Indefinite,
    };
    let min_margin_eigenvalue = values
        .iter()
        .copied()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    Definiteness {
        class,
        inertia,
        lambda_min: values.iter().copied().fold(f64::INFINITY, f64::min),
        lambda_max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_margin_eigenvalue,
        zero_band: band,
    }
}

/// Classifies a symmetric matrix by the signs of its eigenvalues.
///
/// Eigenvalues with `|lambda| <= tol * max(1, ||S||)` count as zero, so the
/// zero matrix is both PSD and NSD (its class is reported as PSD; use
/// [`Definiteness::is_nsd`] for the NSD query).
pub fn definiteness(s: &Matrix, tol: f64) -> Result<Definiteness> {
    let spec = sym_eigen(s, tol)?;
    let scale = spec.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(classify_spectrum(&spec.values, scale, tol))
}

pub fn inertia_of(s: &Matrix, tol: f64) -> Result<Inertia> {
    Ok(definiteness(s, tol)?.inertia)
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

/// `e^{A t}` by scaling and squaring around a diagonal Padé approximant.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    check_finite(a)?;
    check_square(a)?;
    if !t.is_finite() {
        return Err(Error::Overflow);
    }
    let at = a * t;
    // The squaring phase of a 1-norm beyond ~1400 cannot stay finite in f64.
    if at.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max) > 1400.0 {
        return Err(Error::Overflow);
    }
    let e = at.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok(e)
}

/// `I - dt*A`.
pub fn shifted(a: &Matrix, dt: f64) -> Matrix {
    Matrix::identity(a.nrows(), a.ncols()) - a * dt
}

fn check_shift_nonsingular(m: &Matrix, dt: f64) -> Result<()> {
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > SINGULAR_RCOND * smax) {
        return Err(Error::SingularShift { dt });
    }
    Ok(())
}

/// Solves `(I - dt*A) y = x` with full pivoting.
///
/// Fails with [`Error::SingularShift`] when the reciprocal condition number
/// of the shifted matrix is below [`SINGULAR_RCOND`].
pub fn solve_shifted(a: &Matrix, dt: f64, x: &Vector) -> Result<Vector> {
    check_finite(a)?;
    check_square(a)?;
    if x.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: x.len() });
    }
    if dt == 0.0 {
        return Ok(x.clone());
    }
    let m = shifted(a, dt);
    check_shift_nonsingular(&m, dt)?;
    let lu = m.clone().full_piv_lu();
    let mut y = lu.solve(x).ok_or(Error::SingularShift { dt })?;
    // one step of iterative refinement
    let r = x - &m * &y;
    if let Some(dy) = lu.solve(&r) {
        y += dy;
    }
    Ok(y)
}

/// `(I - dt*A)^{-1}`, with the same singularity test as [`solve_shifted`].
pub fn shifted_inverse(a: &Matrix, dt: f64) -> Result<Matrix> {
    check_finite(a)?;
    check_square(a)?;
    let m = shifted(a, dt);
    if dt == 0.0 {
        return Ok(m);
    }
    check_shift_nonsingular(&m, dt)?;
    m.full_piv_lu().try_inverse().ok_or(Error::SingularShift { dt })
}
