//! Angle arithmetic on the wrapped interval `(-pi, pi]`.

#[allow(unused_imports)]
use num_traits::Float;

use core::f64::consts::PI;

/// Wraps an angle to `(-pi, pi]`.
///
/// Values already inside the interval are returned bit-exactly, which keeps
/// repeated wrapping from drifting consensus states.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a % (2.0 * PI);
    let w = if r < 0.0 { r + 2.0 * PI } else { r };
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Signed shortest-arc difference `wrap(a - b)` in `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Interpolates from `a` towards `b` along the shortest arc.
///
/// `s = 0` returns `a` exactly; `s = 1` lands on `b` up to roundoff. When the
/// endpoints are antipodal the arc through `+pi` is taken, following the wrap
/// convention.
pub fn lerp_angle(a: f64, b: f64, s: f64) -> f64 {
    if s == 0.0 {
        return wrap_angle(a);
    }
    wrap_angle(a + s * angle_diff(b, a))
}
