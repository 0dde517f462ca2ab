//! Acoustic tap localization on ad hoc surfaces.
//!
//! Four contact microphones sit on a cross: a left/right pair on one stereo
//! device and a top/bottom pair on another. Each device stream is scanned for
//! tap onsets, the onsets of the two channels are paired into a time
//! difference of arrival (TDOA), and the two per-pair TDOAs are intersected as
//! hyperbolas to recover the `(x, y)` of the tap. Per-axis propagation speeds
//! come from a least-squares calibration.
//!
//! The crate is organized as:
//!
//! - [`signal`]: chunked 16-bit PCM ingestion, onset detection, debounced
//!   per-device detector.
//! - [`geometry`]: sensor layout, closed-form hyperbola intersection, quadrant
//!   resolution and a grid-search oracle.
//! - [`calibration`]: per-axis linear fits and location statistics.
//! - [`sim`]: anisotropic surface simulator producing synthetic device streams.
//! - [`harness`]: scenario configuration, experiments and report output.
//!
//! Geometry and calibration are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod geometry;
pub mod harness;
pub mod numfmt;
pub mod scalar;
pub mod signal;
pub mod sim;

pub use scalar::Scalar;

pub type SensorLayout64 = geometry::SensorLayout<f64>;
pub type SensorLayout32 = geometry::SensorLayout<f32>;
pub type TapEstimate64 = geometry::TapEstimate<f64>;
pub type TapEstimate32 = geometry::TapEstimate<f32>;
pub type HyperbolaIntercepts64 = geometry::HyperbolaIntercepts<f64>;
pub type DeltaDistance64 = geometry::DeltaDistance<f64>;
pub type TdoaObservation64 = signal::TdoaObservation<f64>;
pub type AxisFit64 = calibration::AxisFit<f64>;
pub type AxisFit32 = calibration::AxisFit<f32>;
pub type CalibrationSample64 = calibration::CalibrationSample<f64>;
