//! Closed-form intersection of the two hyperbola branches.
//!
//! With `a`, `b` the vertex intercepts and `p = s_x - |a|`, `q = s_y - |b|`
//! the vertex-to-sensor offsets, the intersection is
//!
//! ```text
//! x² = (p - s_x)² · q · (-N(p, q)) / (-D(p, q))
//! y² = Y(p, x) / Z(p)
//! ```
//!
//! where `N`, `D`, `Y`, `Z` are polynomials whose coefficients depend only on
//! the half separations (see [`ClosedFormCoefficients`]). On the 26 cm
//! prototype they reduce to the integer constants 52, 104, 676, 2704, 3380,
//! 35152 and 456976.
//!
//! The solver evaluates the same quantities in factored form,
//! `x² = a² B (A + b²) / (A B - a² b²)` with `A = s_x² - a²`,
//! `B = s_y² - b²`, and `y² = A (x²/a² - 1)`, which avoids the cancellation of
//! the expanded polynomials near the axes.

use super::{
    hyperbola_residual_scaled, Axis, GeometryError, HyperbolaIntercepts, Method, Quadrant, SensorLayout, TapEstimate,
    DEGENERATE_INTERCEPT_CM, RADICAND_TOLERANCE,
};
use crate::Scalar;

/// Polynomial coefficients of the expanded closed form for a given layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormCoefficients<T> {
    /// `N(p, q)` over the monomials `p²q, p², pq, p, q³, q², q, 1`.
    pub x_numerator: [T; 8],
    /// `D(p, q)` over `p², p, q², q, 1`.
    pub x_denominator: [T; 5],
    /// `Y(p, x)` over `p⁴, p²x², p³, px², p², p`.
    pub y_numerator: [T; 6],
    /// `Z(p)` over `p², p, 1`.
    pub y_denominator: [T; 3],
    half_sep_x: T,
}

impl<T: Scalar> ClosedFormCoefficients<T> {
    pub fn new(layout: &SensorLayout<T>) -> Self {
        let sx = layout.half_sep_x;
        let sy = layout.half_sep_y;
        let c = T::lit;
        Self {
            x_numerator: [
                -T::one(),
                c(2.0) * sy,
                c(2.0) * sx,
                -c(4.0) * sx * sy,
                T::one(),
                -c(4.0) * sy,
                c(5.0) * sy * sy,
                -c(2.0) * sy * sy * sy,
            ],
            x_denominator: [sy * sy, -c(2.0) * sx * sy * sy, sx * sx, -c(2.0) * sx * sx * sy, sx * sx * sy * sy],
            y_numerator: [-T::one(), T::one(), c(4.0) * sx, -c(2.0) * sx, -c(5.0) * sx * sx, c(2.0) * sx * sx * sx],
            y_denominator: [-T::one(), c(2.0) * sx, -sx * sx],
            half_sep_x: sx,
        }
    }

    pub fn n(&self, p: T, q: T) -> T {
        let k = &self.x_numerator;
        k[0] * p * p * q + k[1] * p * p + k[2] * p * q + k[3] * p + k[4] * q * q * q + k[5] * q * q + k[6] * q + k[7]
    }

    pub fn d(&self, p: T, q: T) -> T {
        let k = &self.x_denominator;
        k[0] * p * p + k[1] * p + k[2] * q * q + k[3] * q + k[4]
    }

    /// `x²` from the expanded form.
    pub fn x_squared(&self, p: T, q: T) -> T {
        let lead = p - self.half_sep_x;
        lead * lead * q * (-self.n(p, q)) / (-self.d(p, q))
    }

    /// `y²` from the expanded form given the solved `x`.
    pub fn y_squared(&self, p: T, x: T) -> T {
        let k = &self.y_numerator;
        let x2 = x * x;
        let num = k[0] * p.powi(4) + k[1] * p * p * x2 + k[2] * p.powi(3) + k[3] * p * x2 + k[4] * p * p + k[5] * p;
        let z = &self.y_denominator;
        num / (z[0] * p * p + z[1] * p + z[2])
    }
}

/// Solves for the tap on an isotropic surface.
pub fn solve_closed_form<T: Scalar>(
    intercepts: &HyperbolaIntercepts<T>,
    layout: &SensorLayout<T>,
) -> Result<TapEstimate<T>, GeometryError> {
    solve_closed_form_scaled(intercepts, layout, T::one())
}

/// Solves for the tap on a surface with elliptical slowness, where
/// `anisotropy = speed_x / speed_y`. The left/right branch then lives in a
/// frame with y stretched by `anisotropy` and the top/bottom branch in one
/// with x shrunk by it; both remain linear in `(x², y²)`.
pub fn solve_closed_form_scaled<T: Scalar>(
    intercepts: &HyperbolaIntercepts<T>,
    layout: &SensorLayout<T>,
    anisotropy: T,
) -> Result<TapEstimate<T>, GeometryError> {
    let sx = layout.half_sep_x;
    let sy = layout.half_sep_y;
    let a = intercepts.a.abs();
    let b = intercepts.b.abs();
    if !(a < sx) {
        return Err(GeometryError::InfeasibleIntercept {
            axis: Axis::X,
            intercept: intercepts.a.as_f64(),
            half_sep: sx.as_f64(),
        });
    }
    if !(b < sy) {
        return Err(GeometryError::InfeasibleIntercept {
            axis: Axis::Y,
            intercept: intercepts.b.as_f64(),
            half_sep: sy.as_f64(),
        });
    }
    if !(anisotropy > T::zero()) {
        return Err(GeometryError::InvalidSpeed(anisotropy.as_f64()));
    }
    let tol = T::lit(DEGENERATE_INTERCEPT_CM).max(T::epsilon() * sx.max(sy) * T::lit(4.0));
    let a_axis = a < tol;
    let b_axis = b < tol;

    let (x_mag, y_mag) = match (a_axis, b_axis) {
        (true, true) => (T::zero(), T::zero()),
        // left/right locus collapses to the line x = 0
        (true, false) => (T::zero(), b),
        (false, true) => (a, T::zero()),
        (false, false) => {
            let k2 = anisotropy * anisotropy;
            let conj_a = (sx * sx - a * a) / k2;
            let conj_b = k2 * (sy * sy - b * b);
            let det = conj_a * conj_b - a * a * b * b;
            if !(det > T::zero()) {
                return Err(GeometryError::NoIntersection(det.as_f64()));
            }
            let x2 = a * a * conj_b * (conj_a + b * b) / det;
            let mut ratio = x2 / (a * a) - T::one();
            if ratio < T::zero() {
                if ratio > -T::lit(RADICAND_TOLERANCE) {
                    ratio = T::zero();
                } else {
                    return Err(GeometryError::NoIntersection(ratio.as_f64()));
                }
            }
            (x2.sqrt(), (conj_a * ratio).sqrt())
        }
    };
    if !x_mag.is_finite() || !y_mag.is_finite() {
        return Err(GeometryError::NoIntersection(f64::INFINITY));
    }

    let (hint_x, hint_y) = intercepts.quadrant_hint.signs();
    let pick = |hint: i8, raw: T| -> i8 {
        if hint != 0 {
            hint
        } else if raw > T::zero() {
            1
        } else {
            -1
        }
    };
    let sign_x = if x_mag == T::zero() { 0 } else { pick(hint_x, intercepts.a) };
    let sign_y = if y_mag == T::zero() { 0 } else { pick(hint_y, intercepts.b) };
    let x = if sign_x < 0 { -x_mag } else { x_mag };
    let y = if sign_y < 0 { -y_mag } else { y_mag };

    let residual_lr = if a_axis { x / sx } else { hyperbola_residual_scaled((x, y), a, sx, Axis::X, anisotropy)? };
    let residual_tb = if b_axis { y / sy } else { hyperbola_residual_scaled((x, y), b, sy, Axis::Y, anisotropy)? };

    Ok(TapEstimate {
        x,
        y,
        quadrant: Quadrant::from_signs(sign_x, sign_y),
        residual_lr,
        residual_tb,
        method: Method::ClosedForm,
    })
}
