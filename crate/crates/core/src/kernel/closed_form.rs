//! Closed-form kernels of the rod and rhombus models.

use core::f64::consts::FRAC_PI_2;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{invalid, Result};

/// Two rods of unit length joined at the origin, angles `p = (p1, p2)`.
/// The kernel is the squared difference of the signed triangle areas (up to
/// a factor two): `(sin(p1 - p2) - sin(q1 - q2))^2`.
pub fn two_rod_kernel(p: [f64; 2], q: [f64; 2]) -> f64 {
    let d = (p[0] - p[1]).sin() - (q[0] - q[1]).sin();
    d * d
}

/// Rods of lengths `x1, x2 in [0, L]`; a point is `(x1, x2, p1, p2)`.
pub fn sized_two_rod_kernel(x: [f64; 4], y: [f64; 4], max_length: f64) -> Result<f64> {
    if !(max_length > 0.0 && max_length.is_finite()) {
        return Err(invalid!("maximal rod length must be positive, got {max_length}"));
    }
    for v in [x[0], x[1], y[0], y[1]] {
        if !(0.0..=max_length).contains(&v) {
            return Err(invalid!("rod length {v} outside [0, {max_length}]"));
        }
    }
    Ok(sized_unchecked(x, y))
}

pub(crate) fn sized_feature(x: &[f64]) -> f64 {
    x[0] * x[1] * (x[2] - x[3]).sin()
}

pub(crate) fn sized_unchecked(x: [f64; 4], y: [f64; 4]) -> f64 {
    let d = sized_feature(&x) - sized_feature(&y);
    d * d
}

const RHOMBUS_SLACK: f64 = 1e-12;

/// Area of the symmetric difference of the aligned unit-side rhombi `R_p`
/// and `R_q`, `p, q in [0, pi/2]`.
///
/// `8 sin^2(D/4) / sin(D/2) = 4 tan(D/4)` with `D = |p - q|`, so the
/// prefactor is evaluated as a tangent. This vanishes exactly on the
/// diagonal and has no cancellation near it.
pub fn rhombus_kernel(p: f64, q: f64) -> Result<f64> {
    let check = |v: f64| {
        if (-RHOMBUS_SLACK..=FRAC_PI_2 + RHOMBUS_SLACK).contains(&v) {
            Ok(v.clamp(0.0, FRAC_PI_2))
        } else {
            Err(invalid!("rhombus angle {v} outside [0, pi/2]"))
        }
    };
    Ok(rhombus_unchecked(check(p)?, check(q)?))
}

pub(crate) fn rhombus_unchecked(p: f64, q: f64) -> f64 {
    let prefactor = 4.0 * ((p - q).abs() / 4.0).tan();
    let s = (p + q) / 4.0;
    let (ss, cs) = s.sin_cos();
    let bracket = ss * ss * (p / 2.0).sin() * (q / 2.0).sin() + cs * cs * (p / 2.0).cos() * (q / 2.0).cos();
    prefactor * bracket
}
