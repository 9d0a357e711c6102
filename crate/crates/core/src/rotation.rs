//! Axis-angle rotations.
//!
//! `R(v) = I + a(θ)·[v]× + b(θ)·[v]×²` with `θ = |v|`, `a = sin θ / θ` and
//! `b = (1 − cos θ) / θ²`. Both coefficients and their derivatives switch to
//! Taylor series near zero so the map and its Jacobian stay smooth through the
//! origin.

use nalgebra::{Matrix3, Rotation3, Vector3};

/// Below this angle the rotation itself uses the series form.
const SERIES_ANGLE: f64 = 1e-8;
/// Below this angle the derivative coefficients use the series form
/// (their closed forms lose digits to cancellation much earlier).
const DERIVATIVE_SERIES_ANGLE: f64 = 1e-1;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `(a, b)` Rodrigues coefficients.
fn coefficients(theta: f64) -> (f64, f64) {
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    }
}

/// `(a'(θ)/θ, b'(θ)/θ)`.
fn coefficient_slopes(theta: f64) -> (f64, f64) {
    let t2 = theta * theta;
    if theta < DERIVATIVE_SERIES_ANGLE {
        (
            -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0 + t2 * t2 * t2 / 45360.0,
            -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0 + t2 * t2 * t2 / 453600.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (
            (theta * c - s) / (t2 * theta),
            (theta * s - 2.0 * (1.0 - c)) / (t2 * t2),
        )
    }
}

/// Rodrigues map from an axis-angle vector to a rotation matrix.
pub fn axis_angle_to_rotation(aa: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b) = coefficients(aa.norm());
    let k = skew(aa);
    Matrix3::identity() + k * a + k * k * b
}

/// Partial derivatives `∂R/∂aa_i` for `i = 0, 1, 2`.
pub fn rotation_jacobian(aa: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let theta = aa.norm();
    let (a, b) = coefficients(theta);
    let (da, db) = coefficient_slopes(theta);
    let k = skew(aa);
    let k2 = k * k;
    std::array::from_fn(|i| {
        let ei = skew(&Vector3::ith(i, 1.0));
        ei * a + (ei * k + k * ei) * b + k * (da * aa[i]) + k2 * (db * aa[i])
    })
}

/// Canonical axis-angle of a rotation matrix, with angle in `[0, π]`.
pub fn rotation_to_axis_angle(r: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix(r).scaled_axis()
}

/// Wraps an axis-angle vector so its magnitude lies in `[0, π]`.
pub fn canonicalize(aa: &Vector3<f64>) -> Vector3<f64> {
    rotation_to_axis_angle(&axis_angle_to_rotation(aa))
}

/// Vector-Jacobian product: maps an adjoint on `R` (Frobenius pairing) to an
/// adjoint on the axis-angle vector.
pub fn rotation_vjp(aa: &Vector3<f64>, adj_r: &Matrix3<f64>) -> Vector3<f64> {
    let jac = rotation_jacobian(aa);
    Vector3::new(
        jac[0].component_mul(adj_r).sum(),
        jac[1].component_mul(adj_r).sum(),
        jac[2].component_mul(adj_r).sum(),
    )
}
