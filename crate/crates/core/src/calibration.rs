//! Per-axis propagation speed from taps at known positions, and the
//! statistics used to judge localization runs.
//!
//! Distance differences are regressed on time differences, so the fitted
//! slope is a speed in cm/s directly. Both quantities use the observation
//! orientation `second - first`, which keeps the slope positive for either
//! pair.

use std::fmt::Write as _;

use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::geometry::{Axis, SensorLayout};
use crate::numfmt::sig9;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least two distinct distance differences, got {0}")]
    TooFewDistinct(usize),
    #[error("all time differences are identical; the fit is singular")]
    Singular,
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// One tap at a known position along a sensor axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample<T = f64> {
    /// Position along the axis (cm).
    pub known_position: T,
    /// `d(second) - d(first)` for the axis pair, from geometry (cm).
    pub distance_diff: T,
    /// Measured `t(second) - t(first)` (s).
    pub tdoa: T,
}

impl<T: Scalar> CalibrationSample<T> {
    pub fn new(known_position: T, distance_diff: T, tdoa: T) -> Self {
        Self { known_position, distance_diff, tdoa }
    }

    /// True when `|distance_diff|` fits between the axis sensors.
    pub fn is_feasible(&self, half_sep: T) -> bool {
        self.distance_diff.abs() <= T::lit(2.0) * half_sep
    }
}

/// Least-squares line `distance_diff = speed * tdoa + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisFit<T = f64> {
    pub axis: Axis,
    /// Slope, cm/s.
    pub speed: T,
    /// Offset in cm at zero lag; absorbs one-sided onset latency.
    pub intercept: T,
    pub r_squared: T,
    /// `(position, sample stddev of tdoa)` per distinct known position,
    /// ordered by position.
    pub per_location_stddev: Vec<(T, T)>,
    pub samples: usize,
}

impl<T: Scalar> AxisFit<T> {
    /// Distance difference predicted for a lag.
    pub fn distance_diff(&self, tdoa: T) -> T {
        self.speed * tdoa + self.intercept
    }
}

/// Sample mean and `n - 1` standard deviation; zero spread for one value.
pub fn mean_and_stddev<T: Scalar>(values: &[T]) -> (T, T) {
    let n = values.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let nt = T::from_usize(n).unwrap();
    let mean = values.iter().fold(T::zero(), |acc, &v| acc + v) / nt;
    if n == 1 {
        return (mean, T::zero());
    }
    let ss = values.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean));
    (mean, (ss / T::from_usize(n - 1).unwrap()).sqrt())
}

fn group_by_position<T: Scalar>(samples: &[CalibrationSample<T>]) -> Vec<(T, Vec<T>)> {
    let mut sorted: Vec<_> = samples.iter().map(|s| (s.known_position, s.tdoa)).collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut groups: Vec<(T, Vec<T>)> = Vec::new();
    for (pos, tdoa) in sorted {
        match groups.last_mut() {
            Some((p, v)) if *p == pos => v.push(tdoa),
            _ => groups.push((pos, vec![tdoa])),
        }
    }
    groups
}

/// Ordinary least squares of distance difference on time difference.
pub fn fit_axis<T: Scalar>(axis: Axis, samples: &[CalibrationSample<T>]) -> Result<AxisFit<T>, CalibrationError> {
    let mut distinct: Vec<T> = samples.iter().map(|s| s.distance_diff).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(CalibrationError::TooFewDistinct(distinct.len()));
    }
    let n = T::from_usize(samples.len()).unwrap();
    let t_mean = samples.iter().fold(T::zero(), |acc, s| acc + s.tdoa) / n;
    let d_mean = samples.iter().fold(T::zero(), |acc, s| acc + s.distance_diff) / n;
    let (mut stt, mut std_, mut sdd) = (T::zero(), T::zero(), T::zero());
    for s in samples {
        let dt = s.tdoa - t_mean;
        let dd = s.distance_diff - d_mean;
        stt += dt * dt;
        std_ += dt * dd;
        sdd += dd * dd;
    }
    if !(stt > T::zero()) {
        return Err(CalibrationError::Singular);
    }
    let speed = std_ / stt;
    let intercept = d_mean - speed * t_mean;
    let ss_res = samples.iter().fold(T::zero(), |acc, s| {
        let r = s.distance_diff - (speed * s.tdoa + intercept);
        acc + r * r
    });
    let r_squared = (T::one() - ss_res / sdd).max(T::zero()).min(T::one());
    let per_location_stddev =
        group_by_position(samples).into_iter().map(|(pos, tdoas)| (pos, mean_and_stddev(&tdoas).1)).collect();
    Ok(AxisFit { axis, speed, intercept, r_squared, per_location_stddev, samples: samples.len() })
}

/// Position along a single sensor pair's line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneDPosition<T> {
    pub position: T,
    /// False when the value lies more than 10% beyond a sensor.
    pub in_range: bool,
}

/// Maps a lag (observation orientation, canonical pair order) to a position
/// along the fitted axis: `origin_offset` at the midpoint, positive toward
/// the Right (Top) sensor.
pub fn one_d_position<T: Scalar>(tdoa: T, fit: &AxisFit<T>, origin_offset: T, half_sep: T) -> OneDPosition<T> {
    let toward_second = T::lit(fit.axis.pair().channels()[1].axis_sign() as f64);
    let position = origin_offset - toward_second * fit.distance_diff(tdoa) / T::lit(2.0);
    let in_range = (position - origin_offset).abs() <= half_sep * T::lit(1.1);
    OneDPosition { position, in_range }
}

/// A solved tap paired with where it really was.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocatedTap<T = f64> {
    pub truth: (T, T),
    pub estimate: (T, T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats<T = f64> {
    pub truth: (T, T),
    pub count: usize,
    pub mean: (T, T),
    pub stddev: (T, T),
    pub mean_abs_error: (T, T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationStats<T = f64> {
    /// In order of first appearance of each true position.
    pub groups: Vec<GroupStats<T>>,
    /// Mean absolute error over every estimate, per axis.
    pub mean_abs_error: (T, T),
    pub count: usize,
}

/// Per-location accuracy (mean absolute error) and precision (sample stddev).
pub fn location_stats<T: Scalar>(taps: &[LocatedTap<T>]) -> Result<LocationStats<T>, CalibrationError> {
    if taps.is_empty() {
        return Err(CalibrationError::Usage("no estimates to summarize".into()));
    }
    let mut order: Vec<(T, T)> = Vec::new();
    let mut buckets: Vec<Vec<(T, T)>> = Vec::new();
    for tap in taps {
        match order.iter().position(|t| *t == tap.truth) {
            Some(i) => buckets[i].push(tap.estimate),
            None => {
                order.push(tap.truth);
                buckets.push(vec![tap.estimate]);
            }
        }
    }
    let groups = order
        .into_iter()
        .zip(buckets)
        .map(|(truth, est)| {
            let xs: Vec<T> = est.iter().map(|e| e.0).collect();
            let ys: Vec<T> = est.iter().map(|e| e.1).collect();
            let (mx, sx) = mean_and_stddev(&xs);
            let (my, sy) = mean_and_stddev(&ys);
            let n = T::from_usize(est.len()).unwrap();
            let ax = xs.iter().fold(T::zero(), |a, &v| a + (v - truth.0).abs()) / n;
            let ay = ys.iter().fold(T::zero(), |a, &v| a + (v - truth.1).abs()) / n;
            GroupStats { truth, count: est.len(), mean: (mx, my), stddev: (sx, sy), mean_abs_error: (ax, ay) }
        })
        .collect();
    let n = T::from_usize(taps.len()).unwrap();
    let ex = taps.iter().fold(T::zero(), |a, t| a + (t.estimate.0 - t.truth.0).abs()) / n;
    let ey = taps.iter().fold(T::zero(), |a, t| a + (t.estimate.1 - t.truth.1).abs()) / n;
    Ok(LocationStats { groups, mean_abs_error: (ex, ey), count: taps.len() })
}

/// Fitted speeds and offsets for a surface, as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationProfile {
    pub speed_x_cm_per_s: f64,
    pub speed_y_cm_per_s: f64,
    pub intercept_x: f64,
    pub intercept_y: f64,
    pub r2_x: f64,
    pub r2_y: f64,
    pub layout: SensorLayout<f64>,
}

impl CalibrationProfile {
    pub fn from_fits(fit_x: &AxisFit<f64>, fit_y: &AxisFit<f64>, layout: SensorLayout<f64>) -> Self {
        Self {
            speed_x_cm_per_s: fit_x.speed,
            speed_y_cm_per_s: fit_y.speed,
            intercept_x: fit_x.intercept,
            intercept_y: fit_y.intercept,
            r2_x: fit_x.r_squared,
            r2_y: fit_y.r_squared,
            layout,
        }
    }

    /// A profile that trusts known speeds exactly.
    pub fn exact(speed_x: f64, speed_y: f64, layout: SensorLayout<f64>) -> Self {
        Self {
            speed_x_cm_per_s: speed_x,
            speed_y_cm_per_s: speed_y,
            intercept_x: 0.0,
            intercept_y: 0.0,
            r2_x: 1.0,
            r2_y: 1.0,
            layout,
        }
    }

    pub fn speed(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.speed_x_cm_per_s,
            Axis::Y => self.speed_y_cm_per_s,
        }
    }

    /// `speed_x / speed_y`.
    pub fn anisotropy(&self) -> f64 {
        self.speed_x_cm_per_s / self.speed_y_cm_per_s
    }

    pub fn to_text(&self) -> String {
        let rows = [
            ("speed_x_cm_per_s", self.speed_x_cm_per_s),
            ("speed_y_cm_per_s", self.speed_y_cm_per_s),
            ("intercept_x", self.intercept_x),
            ("intercept_y", self.intercept_y),
            ("r2_x", self.r2_x),
            ("r2_y", self.r2_y),
            ("layout.half_sep_x", self.layout.half_sep_x),
            ("layout.half_sep_y", self.layout.half_sep_y),
        ];
        let mut out = String::new();
        for (key, value) in rows {
            let _ = writeln!(out, "{key} = {}", sig9(value));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CalibrationError> {
        let kv = KeyValues::parse(text)?;
        let layout = SensorLayout::new(kv.require_f64("layout.half_sep_x")?, kv.require_f64("layout.half_sep_y")?)
            .map_err(|e| CalibrationError::Usage(e.to_string()))?;
        let profile = Self {
            speed_x_cm_per_s: kv.require_f64("speed_x_cm_per_s")?,
            speed_y_cm_per_s: kv.require_f64("speed_y_cm_per_s")?,
            intercept_x: kv.require_f64("intercept_x")?,
            intercept_y: kv.require_f64("intercept_y")?,
            r2_x: kv.require_f64("r2_x")?,
            r2_y: kv.require_f64("r2_y")?,
            layout,
        };
        if !(profile.speed_x_cm_per_s > 0.0 && profile.speed_y_cm_per_s > 0.0) {
            return Err(CalibrationError::Usage("profile speeds must be positive".into()));
        }
        Ok(profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn line(speed: f64, intercept: f64, tdoas: &[f64]) -> Vec<CalibrationSample<f64>> {
        tdoas.iter().enumerate().map(|(i, &t)| CalibrationSample::new(i as f64, speed * t + intercept, t)).collect()
    }

    #[test]
    fn two_point_line() {
        let samples = [CalibrationSample::new(0.0, 0.0, 0.0), CalibrationSample::new(1.0, 45.014, 1e-3)];
        let fit = fit_axis(Axis::X, &samples).unwrap();
        assert_abs_diff_eq!(fit.speed, 45_014.0, epsilon = 1e-7);
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_data_is_exact() {
        let tdoas: Vec<f64> = (-10..=10).map(|i| i as f64 * 7.3e-5).collect();
        let fit = fit_axis(Axis::Y, &line(37_259.0, 0.4, &tdoas)).unwrap();
        assert_abs_diff_eq!(fit.speed, 37_259.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.intercept, 0.4, epsilon = 1e-9);
        assert!((1.0 - fit.r_squared).abs() < 1e-12);
    }

    #[test]
    fn singular_and_underdetermined() {
        let same_t = [CalibrationSample::new(0.0, 1.0, 1e-4), CalibrationSample::new(1.0, 2.0, 1e-4)];
        assert!(matches!(fit_axis(Axis::X, &same_t), Err(CalibrationError::Singular)));
        let same_d = [CalibrationSample::new(0.0, 1.0, 1e-4), CalibrationSample::new(1.0, 1.0, 2e-4)];
        assert!(matches!(fit_axis(Axis::X, &same_d), Err(CalibrationError::TooFewDistinct(1))));
        assert!(fit_axis::<f64>(Axis::X, &[]).is_err());
    }

    #[test]
    fn per_location_stddev_uses_n_minus_one() {
        let samples = [
            CalibrationSample::new(5.0, 10.0, 1.0e-4),
            CalibrationSample::new(5.0, 10.0, 3.0e-4),
            CalibrationSample::new(-5.0, -10.0, -2.0e-4),
        ];
        let fit = fit_axis(Axis::X, &samples).unwrap();
        assert_eq!(fit.per_location_stddev.len(), 2);
        assert_eq!(fit.per_location_stddev[0], (-5.0, 0.0));
        assert_eq!(fit.per_location_stddev[1].0, 5.0);
        assert_abs_diff_eq!(fit.per_location_stddev[1].1, 2.0f64.sqrt() * 1.0e-4, epsilon = 1e-15);
    }

    #[test]
    fn f32_fit() {
        let tdoas: Vec<f32> = (-5..=5).map(|i| i as f32 * 1e-4).collect();
        let samples: Vec<_> = tdoas.iter().map(|&t| CalibrationSample::new(0.0f32, 45_014.0 * t, t)).collect();
        let fit = fit_axis(Axis::X, &samples).unwrap();
        assert!((fit.speed - 45_014.0).abs() / 45_014.0 < 1e-4);
    }

    #[test]
    fn midpoint_maps_to_origin_offset() {
        let fit = fit_axis(Axis::X, &line(45_014.0, 0.0, &[-1e-4, 0.0, 1e-4])).unwrap();
        let p = one_d_position(0.0, &fit, 26.4164968363, 26.0);
        assert_abs_diff_eq!(p.position, 26.4164968363, epsilon = 1e-9);
        assert!(p.in_range);
    }

    #[test]
    fn lag_at_sensor_maps_to_sensor() {
        let fit = fit_axis(Axis::X, &line(45_014.0, 0.0, &[-1e-4, 0.0, 1e-4])).unwrap();
        // tap on the right sensor: right hears it 52 cm earlier
        let lag = -52.0 / 45_014.0;
        assert_abs_diff_eq!(one_d_position(lag, &fit, 0.0, 26.0).position, 26.0, epsilon = 1e-9);
        let fit_y = AxisFit { axis: Axis::Y, ..fit.clone() };
        // top heard first: positive lag, positive y
        assert_abs_diff_eq!(one_d_position(52.0 / 45_014.0, &fit_y, 0.0, 26.0).position, 26.0, epsilon = 1e-9);
        let far = one_d_position(-3.0 * lag, &fit, 0.0, 26.0);
        assert!(!far.in_range);
        assert_abs_diff_eq!(far.position, -78.0, epsilon = 1e-9);
    }

    #[test]
    fn stats_single_exact_estimate() {
        let s = location_stats(&[LocatedTap { truth: (10.0, 0.0), estimate: (10.0, 0.0) }]).unwrap();
        assert_eq!(s.mean_abs_error, (0.0, 0.0));
        assert_eq!(s.groups[0].stddev, (0.0, 0.0));
    }

    #[test]
    fn stats_two_estimates() {
        let taps = [
            LocatedTap { truth: (10.0, 0.0), estimate: (9.0, 0.0) },
            LocatedTap { truth: (10.0, 0.0), estimate: (11.0, 0.0) },
        ];
        let s = location_stats(&taps).unwrap();
        assert_eq!(s.groups.len(), 1);
        assert_abs_diff_eq!(s.mean_abs_error.0, 1.0);
        assert_abs_diff_eq!(s.groups[0].stddev.0, 2.0f64.sqrt());
        assert_abs_diff_eq!(s.groups[0].mean.0, 10.0);
    }

    #[test]
    fn stats_reject_empty() {
        assert!(matches!(location_stats::<f64>(&[]), Err(CalibrationError::Usage(_))));
    }

    #[test]
    fn profile_text_roundtrip() {
        let p = CalibrationProfile {
            speed_x_cm_per_s: 45_014.0,
            speed_y_cm_per_s: 37_259.0,
            intercept_x: 0.125,
            intercept_y: -0.5,
            r2_x: 0.999,
            r2_y: 0.998,
            layout: SensorLayout::prototype(),
        };
        let text = p.to_text();
        assert!(text.starts_with("speed_x_cm_per_s = 45014\n"));
        assert_eq!(CalibrationProfile::from_text(&text).unwrap(), p);
        assert!(CalibrationProfile::from_text("speed_x_cm_per_s = 1\n").is_err());
    }

    proptest! {
        #[test]
        fn fit_is_permutation_invariant(
            pts in prop::collection::vec((-1e-3f64..1e-3, -50.0f64..50.0), 3..40),
            seed in any::<u64>(),
        ) {
            let samples: Vec<_> = pts.iter().map(|&(t, d)| CalibrationSample::new(d, d, t)).collect();
            let Ok(fit) = fit_axis(Axis::X, &samples) else { return Ok(()); };
            let mut shuffled = samples.clone();
            let n = shuffled.len();
            let mut state = seed;
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            let other = fit_axis(Axis::X, &shuffled).unwrap();
            prop_assert!((fit.speed - other.speed).abs() <= 1e-6 * fit.speed.abs().max(1.0));
            prop_assert!((fit.r_squared - other.r_squared).abs() < 1e-9);
            prop_assert_eq!(fit.per_location_stddev.len(), other.per_location_stddev.len());
        }
    }
}
