//! Pseudo-range multilateration on the sensor cross.
//!
//! Sensors sit at `(±half_sep_x, 0)` (left/right device) and
//! `(0, ±half_sep_y)` (top/bottom device). Each device yields one distance
//! difference, which pins the tap to one branch of a hyperbola whose foci are
//! that device's sensors. Two branches intersect in one point per quadrant;
//! which sensor of each pair fired first picks the quadrant.
//!
//! Sign conventions used throughout:
//!
//! - [`DeltaDistance::delta`] is `d(sensors[1]) - d(sensors[0])`, the same
//!   orientation as the observation it came from.
//! - [`DeltaDistance::axis_offset`] is `d_left - d_right` (or
//!   `d_bottom - d_top`), positive when the tap lies on the Right (Top) side.
//! - Intercepts are half the axis offset: `a = Δ_LR / 2`, `b = Δ_TB / 2`.

mod closed_form;
mod oracle;

pub use closed_form::{solve_closed_form, solve_closed_form_scaled, ClosedFormCoefficients};
pub use oracle::{oracle_solve, OracleConfig, SearchBox};

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::numfmt::sig9;
use crate::signal::{Channel, Pair, TdoaObservation};
use crate::Scalar;

/// Intercepts smaller than this (cm) are treated as lying on the axis.
pub const DEGENERATE_INTERCEPT_CM: f64 = 1e-9;

/// Relative slack before a negative radicand counts as "no intersection".
pub const RADICAND_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid sensor layout: {0}")]
    InvalidLayout(String),
    #[error("propagation speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("infeasible observation on {pair}: |Δ| = {delta} cm exceeds sensor separation {limit} cm")]
    Infeasible { pair: Pair, delta: f64, limit: f64 },
    #[error("intercept {intercept} cm outside the open range (-{half_sep}, {half_sep}) for {axis}")]
    InfeasibleIntercept { axis: Axis, intercept: f64, half_sep: f64 },
    #[error("degenerate hyperbola: intercept {intercept} cm with half separation {half_sep} cm")]
    Degenerate { intercept: f64, half_sep: f64 },
    #[error("hyperbolas do not intersect (radicand {0})")]
    NoIntersection(f64),
    #[error("oracle minimum on the search box boundary at ({0}, {1})")]
    BoxTooSmall(f64, f64),
    #[error("oracle resolution must be positive, got {0}")]
    InvalidResolution(f64),
}

/// Coordinate axis; `X` is the left/right sensor axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn pair(self) -> Pair {
        match self {
            Axis::X => Pair::LeftRight,
            Axis::Y => Pair::TopBottom,
        }
    }

    pub fn of_pair(pair: Pair) -> Self {
        match pair {
            Pair::LeftRight => Axis::X,
            Pair::TopBottom => Axis::Y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Distances (cm) from the origin to each sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorLayout<T = f64> {
    pub half_sep_x: T,
    pub half_sep_y: T,
}

impl<T: Scalar> SensorLayout<T> {
    pub fn new(half_sep_x: T, half_sep_y: T) -> Result<Self, GeometryError> {
        if !(half_sep_x > T::zero()) || !(half_sep_y > T::zero()) {
            return Err(GeometryError::InvalidLayout(format!(
                "half separations must be positive, got ({half_sep_x}, {half_sep_y})"
            )));
        }
        Ok(Self { half_sep_x, half_sep_y })
    }

    /// The 26 cm cross of the reference prototype.
    pub fn prototype() -> Self {
        Self { half_sep_x: T::lit(26.0), half_sep_y: T::lit(26.0) }
    }

    pub fn half_sep(&self, axis: Axis) -> T {
        match axis {
            Axis::X => self.half_sep_x,
            Axis::Y => self.half_sep_y,
        }
    }

    pub fn sensor_position(&self, channel: Channel) -> (T, T) {
        let z = T::zero();
        match channel {
            Channel::Left => (-self.half_sep_x, z),
            Channel::Right => (self.half_sep_x, z),
            Channel::Top => (z, self.half_sep_y),
            Channel::Bottom => (z, -self.half_sep_y),
        }
    }

    /// Euclidean distance from `point` to a sensor.
    pub fn distance(&self, point: (T, T), channel: Channel) -> T {
        let (sx, sy) = self.sensor_position(channel);
        (point.0 - sx).hypot(point.1 - sy)
    }

    /// Exact axis offsets `(d_left - d_right, d_bottom - d_top)` for a tap.
    pub fn axis_offsets(&self, point: (T, T)) -> (T, T) {
        (
            self.distance(point, Channel::Left) - self.distance(point, Channel::Right),
            self.distance(point, Channel::Bottom) - self.distance(point, Channel::Top),
        )
    }
}

impl<T: Scalar> Default for SensorLayout<T> {
    fn default() -> Self {
        Self::prototype()
    }
}

/// Signed distance difference (cm) for one sensor pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaDistance<T = f64> {
    pub pair: Pair,
    pub sensors: [Channel; 2],
    /// `d(sensors[1]) - d(sensors[0])`.
    pub delta: T,
}

impl<T: Scalar> DeltaDistance<T> {
    /// Builds from an axis offset (`d_left - d_right` or `d_bottom - d_top`)
    /// in the pair's canonical listing order.
    pub fn from_axis_offset(pair: Pair, offset: T) -> Self {
        let sensors = pair.channels();
        let delta = if sensors[1].axis_sign() > 0 { -offset } else { offset };
        Self { pair, sensors, delta }
    }

    /// Distance difference oriented along the positive axis: positive when the
    /// tap is nearer the Right (Top) sensor.
    pub fn axis_offset(&self) -> T {
        if self.sensors[1].axis_sign() > 0 {
            -self.delta
        } else {
            self.delta
        }
    }

    /// Hyperbola intercept on this pair's axis, `axis_offset / 2`.
    pub fn intercept(&self) -> T {
        self.axis_offset() / T::lit(2.0)
    }
}

/// Converts a time difference into a distance difference at `speed` (cm/s).
pub fn delta_from_tdoa<T: Scalar>(
    obs: &TdoaObservation<T>,
    speed: T,
    layout: &SensorLayout<T>,
) -> Result<DeltaDistance<T>, GeometryError> {
    if !(speed > T::zero()) {
        return Err(GeometryError::InvalidSpeed(speed.as_f64()));
    }
    let delta = obs.tdoa * speed;
    let limit = T::lit(2.0) * layout.half_sep(Axis::of_pair(obs.pair));
    if delta.abs() > limit {
        return Err(GeometryError::Infeasible { pair: obs.pair, delta: delta.as_f64(), limit: limit.as_f64() });
    }
    Ok(DeltaDistance { pair: obs.pair, sensors: obs.sensors, delta })
}

/// Quadrant (or axis half-line) a tap is placed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrant {
    First,
    Second,
    Third,
    Fourth,
    PositiveX,
    NegativeX,
    PositiveY,
    NegativeY,
    Origin,
}

impl Quadrant {
    pub fn from_signs(sx: i8, sy: i8) -> Self {
        match (sx.signum(), sy.signum()) {
            (1, 1) => Quadrant::First,
            (-1, 1) => Quadrant::Second,
            (-1, -1) => Quadrant::Third,
            (1, -1) => Quadrant::Fourth,
            (1, 0) => Quadrant::PositiveX,
            (-1, 0) => Quadrant::NegativeX,
            (0, 1) => Quadrant::PositiveY,
            (0, -1) => Quadrant::NegativeY,
            _ => Quadrant::Origin,
        }
    }

    pub fn signs(self) -> (i8, i8) {
        match self {
            Quadrant::First => (1, 1),
            Quadrant::Second => (-1, 1),
            Quadrant::Third => (-1, -1),
            Quadrant::Fourth => (1, -1),
            Quadrant::PositiveX => (1, 0),
            Quadrant::NegativeX => (-1, 0),
            Quadrant::PositiveY => (0, 1),
            Quadrant::NegativeY => (0, -1),
            Quadrant::Origin => (0, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quadrant::First => "I",
            Quadrant::Second => "II",
            Quadrant::Third => "III",
            Quadrant::Fourth => "IV",
            Quadrant::PositiveX => "axis_x+",
            Quadrant::NegativeX => "axis_x-",
            Quadrant::PositiveY => "axis_y+",
            Quadrant::NegativeY => "axis_y-",
            Quadrant::Origin => "origin",
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn sign_of<T: Scalar>(v: T, tol: T) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

/// Picks the quadrant from which sensor of each pair heard the tap first.
pub fn resolve_quadrant<T: Scalar>(obs_lr: &TdoaObservation<T>, obs_tb: &TdoaObservation<T>) -> Quadrant {
    debug_assert_eq!(obs_lr.pair, Pair::LeftRight);
    debug_assert_eq!(obs_tb.pair, Pair::TopBottom);
    let side = |obs: &TdoaObservation<T>| obs.earliest_channel().map_or(0, Channel::axis_sign);
    Quadrant::from_signs(side(obs_lr), side(obs_tb))
}

/// Hyperbola intercepts of the two pairs plus the quadrant to place the tap in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolaIntercepts<T = f64> {
    /// x-axis intercept of the left/right branch, `Δ_LR / 2`.
    pub a: T,
    /// y-axis intercept of the top/bottom branch, `Δ_TB / 2`.
    pub b: T,
    pub quadrant_hint: Quadrant,
}

impl<T: Scalar> HyperbolaIntercepts<T> {
    /// Intercepts with the hint taken from their signs.
    pub fn new(a: T, b: T) -> Self {
        let tol = T::lit(DEGENERATE_INTERCEPT_CM);
        Self { a, b, quadrant_hint: Quadrant::from_signs(sign_of(a, tol), sign_of(b, tol)) }
    }

    pub fn with_hint(a: T, b: T, quadrant_hint: Quadrant) -> Self {
        Self { a, b, quadrant_hint }
    }

    pub fn from_deltas(lr: &DeltaDistance<T>, tb: &DeltaDistance<T>, quadrant_hint: Quadrant) -> Self {
        debug_assert_eq!(lr.pair, Pair::LeftRight);
        debug_assert_eq!(tb.pair, Pair::TopBottom);
        Self { a: lr.intercept(), b: tb.intercept(), quadrant_hint }
    }
}

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ClosedForm,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Oracle => "oracle",
        }
    }
}

/// A solved tap position in cm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapEstimate<T = f64> {
    pub x: T,
    pub y: T,
    pub quadrant: Quadrant,
    /// Left/right hyperbola equation minus one at `(x, y)`. For an on-axis
    /// intercept the locus is the line `x = 0` and this holds `x / half_sep_x`.
    pub residual_lr: T,
    /// Top/bottom counterpart of `residual_lr`.
    pub residual_tb: T,
    pub method: Method,
}

/// Hyperbola equation minus one for the branch pair on `axis`.
///
/// For `Axis::X` the foci are `(±half_sep, 0)`, the vertex is at
/// `(intercept, 0)` and the equation is
/// `x²/a² - y²/(s² - a²) = 1`; `Axis::Y` swaps the roles of x and y.
/// Writing `p = s - a` turns the conjugate term into `2sp - p²`.
pub fn hyperbola_residual<T: Scalar>(point: (T, T), intercept: T, half_sep: T, axis: Axis) -> Result<T, GeometryError> {
    hyperbola_residual_scaled(point, intercept, half_sep, axis, T::one())
}

/// [`hyperbola_residual`] on a surface whose speed ratio
/// `speed_x / speed_y` is `anisotropy`.
pub fn hyperbola_residual_scaled<T: Scalar>(
    point: (T, T),
    intercept: T,
    half_sep: T,
    axis: Axis,
    anisotropy: T,
) -> Result<T, GeometryError> {
    let a = intercept.abs();
    if a == T::zero() || a >= half_sep {
        return Err(GeometryError::Degenerate { intercept: intercept.as_f64(), half_sep: half_sep.as_f64() });
    }
    let conj = half_sep * half_sep - a * a;
    let (x, y) = point;
    let k2 = anisotropy * anisotropy;
    Ok(match axis {
        Axis::X => x * x / (a * a) - k2 * y * y / conj - T::one(),
        Axis::Y => y * y / (a * a) - x * x / (k2 * conj) - T::one(),
    })
}

/// Number of sensor pairs (hyperbolas) available from `n` sensors.
pub fn enumerate_pairs(n: usize) -> usize {
    if n < 2 {
        0
    } else {
        n * (n - 1) / 2
    }
}

/// Writes `tap_id, x_cm, y_cm, quadrant, residual_lr, residual_tb, method`.
pub fn write_estimates_csv<W: Write, T: Scalar>(out: W, rows: &[(u64, TapEstimate<T>)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tap_id", "x_cm", "y_cm", "quadrant", "residual_lr", "residual_tb", "method"])?;
    for (id, e) in rows {
        w.write_record([
            id.to_string(),
            sig9(e.x.as_f64()),
            sig9(e.y.as_f64()),
            e.quadrant.name().to_string(),
            sig9(e.residual_lr.as_f64()),
            sig9(e.residual_tb.as_f64()),
            e.method.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
