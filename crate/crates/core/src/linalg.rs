//! Small dense linear algebra on top of `nalgebra`.
//!
//! The rigid-body instantiation lives almost entirely in 3×3 matrices and
//! 3-vectors; the LTV machinery uses dynamically sized square matrices
//! (6×6 and 12×12 in practice). All helpers here are pure functions on values.

use nalgebra::{DMatrix, DVector, Dim, Matrix, Matrix3, Storage, SymmetricEigen, Vector3};
use thiserror::Error;

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;
pub type MatN = DMatrix<f64>;
pub type VecN = DVector<f64>;

/// Absolute per-entry tolerance on the symmetric part accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-9;
/// Absolute per-entry tolerance on the skew part accepted by [`sym_eig_bounds`].
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Tolerance on the axis norm accepted by [`rodrigues_exp`].
pub const UNIT_AXIS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not skew-symmetric (max |sym part| = {max_sym:e})")]
    NotSkewSymmetric { max_sym: f64 },
    #[error("matrix is not symmetric (max |skew part| = {max_skew:e})")]
    NotSymmetric { max_skew: f64 },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("rotation axis is not a unit vector (norm = {norm})")]
    NonUnitAxis { norm: f64 },
}

/// The hat map: `hat(v) * w == v.cross(&w)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds [`SKEW_TOL`].
pub fn vee(m: &Mat3) -> Result<Vec3, LinalgError> {
    let max_sym = sym(m).amax();
    if max_sym > SKEW_TOL {
        return Err(LinalgError::NotSkewSymmetric { max_sym });
    }
    Ok(vee_skew_part(m))
}

/// `vee(skew(m))`, defined for every 3×3 matrix.
pub fn vee_skew_part(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn sym(a: &Mat3) -> Mat3 {
    (a + a.transpose()) * 0.5
}

pub fn skew(a: &Mat3) -> Mat3 {
    (a - a.transpose()) * 0.5
}

/// Symmetric part of a square matrix of any size.
pub fn sym_n(a: &MatN) -> MatN {
    (a + a.transpose()) * 0.5
}

/// Frobenius inner product `tr(AᵀB)`.
pub fn frob_inner<R, C, S1, S2>(
    a: &Matrix<f64, R, C, S1>,
    b: &Matrix<f64, R, C, S2>,
) -> Result<f64, LinalgError>
where
    R: Dim,
    C: Dim,
    S1: Storage<f64, R, C>,
    S2: Storage<f64, R, C>,
{
    if a.shape() != b.shape() {
        return Err(LinalgError::DimensionMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).sum())
}

/// Norm induced by [`frob_inner`].
pub fn frob_norm<R, C, S>(a: &Matrix<f64, R, C, S>) -> f64
where
    R: Dim,
    C: Dim,
    S: Storage<f64, R, C>,
{
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn commutator(a: &Mat3, b: &Mat3) -> Mat3 {
    a * b - b * a
}

/// Rotation by `angle` radians about the unit vector `axis` (Rodrigues formula).
pub fn rodrigues_exp(axis: &Vec3, angle: f64) -> Result<Mat3, LinalgError> {
    let norm = axis.norm();
    if (norm - 1.0).abs() > UNIT_AXIS_TOL {
        return Err(LinalgError::NonUnitAxis { norm });
    }
    let k = hat(axis);
    Ok(Mat3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos()))
}

/// `exp(hat(w))` for an arbitrary rotation vector; identity for `w = 0`.
pub fn exp_so3(w: &Vec3) -> Mat3 {
    let angle = w.norm();
    if angle < 1e-300 {
        return Mat3::identity();
    }
    // Renormalize so the axis passes the unit check regardless of rounding.
    let axis = w / angle;
    let k = hat(&axis);
    Mat3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_bounds(a: &MatN) -> Result<(f64, f64), LinalgError> {
    let (r, c) = a.shape();
    if r != c {
        return Err(LinalgError::DimensionMismatch {
            left: (r, c),
            right: (c, r),
        });
    }
    let max_skew = max_asymmetry(a);
    if max_skew > SYMMETRY_TOL * a.amax().max(1.0) {
        return Err(LinalgError::NotSymmetric { max_skew });
    }
    let eig = SymmetricEigen::new(sym_n(a));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Largest absolute entry of the skew part of a square matrix.
pub fn max_asymmetry(a: &MatN) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max(0.5 * (a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Row-major flattening of a 3×3 matrix.
pub fn flatten_row_major(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = m[(i, j)];
        }
    }
    out
}

/// Inverse of [`flatten_row_major`]. Panics if `s` has fewer than 9 entries.
pub fn unflatten_row_major(s: &[f64]) -> Mat3 {
    Mat3::from_row_slice(&s[..9])
}

pub fn all_finite<R, C, S>(a: &Matrix<f64, R, C, S>) -> bool
where
    R: Dim,
    C: Dim,
    S: Storage<f64, R, C>,
{
    a.iter().all(|x| x.is_finite())
}
