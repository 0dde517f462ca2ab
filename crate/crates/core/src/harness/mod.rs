//! End-to-end experiments over the simulator: detection, calibration,
//! localization and reporting.
//!
//! Each experiment expands its grid into taps (`positions × repetitions`),
//! renders and detects every tap independently in parallel, and aggregates
//! in tap order. A tap's random draws depend only on the seed and its id, so
//! a report is identical for any thread count.

mod report;
mod scenario;

use std::io::Read;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use report::{report_emit, LocationRow, ReportFormat, RunReport, SeriesFit, TapFailure, REPORT_HEADER};
pub use scenario::{ExperimentKind, ExperimentSpec, Grid, Scenario, SCENARIO_KEYS};

use crate::calibration::{
    fit_axis, location_stats, mean_and_stddev, one_d_position, AxisFit, CalibrationError, CalibrationProfile,
    CalibrationSample, LocatedTap,
};
use crate::config::ConfigError;
use crate::geometry::{
    delta_from_tdoa, resolve_quadrant, solve_closed_form_scaled, Axis, GeometryError, HyperbolaIntercepts,
    SensorLayout, TapEstimate,
};
use crate::signal::{run_detector, Pair, SignalError, TdoaObservation};
use crate::sim::{SimError, Simulator};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Tap ids used by calibration runs start here, so they never share random
/// draws with the localization taps of the same seed.
pub const CALIBRATION_ID_BASE: u64 = 1 << 40;

/// What the detectors made of one rendered tap.
#[derive(Debug, Clone, PartialEq)]
pub struct TapObservation {
    pub tap_id: u64,
    pub truth: (f64, f64),
    pub lr: Option<TdoaObservation<f64>>,
    pub tb: Option<TdoaObservation<f64>>,
    pub warnings: Vec<String>,
}

impl TapObservation {
    pub fn get(&self, pair: Pair) -> Option<&TdoaObservation<f64>> {
        match pair {
            Pair::LeftRight => self.lr.as_ref(),
            Pair::TopBottom => self.tb.as_ref(),
        }
    }
}

fn canonical(obs: TdoaObservation<f64>) -> TdoaObservation<f64> {
    if obs.sensors == obs.pair.channels() {
        obs
    } else {
        obs.swapped()
    }
}

/// Renders one tap and runs both device detectors over it.
pub fn observe_tap(sim: &Simulator, tap_id: u64, position: (f64, f64)) -> Result<TapObservation, HarnessError> {
    let mut rendering = sim.render_tap(tap_id, position)?;
    let mut warnings = std::mem::take(&mut rendering.truth.warnings);
    let mut detect = |pair: Pair| -> Result<Option<TdoaObservation<f64>>, HarnessError> {
        let stream = rendering.stream(pair);
        let found = run_detector(stream.chunks(sim.detector.chunk_size), sim.detector)?;
        if found.len() > 1 {
            warnings.push(format!("tap {tap_id}: {} detections on {pair}, keeping the first", found.len()));
        }
        Ok(found.into_iter().next().map(|d| canonical(d.observation)))
    };
    let lr = detect(Pair::LeftRight)?;
    let tb = detect(Pair::TopBottom)?;
    Ok(TapObservation { tap_id, truth: position, lr, tb, warnings })
}

/// Observes every tap of a grid, repetitions adjacent, ids from `first_id`.
pub fn observe_grid(sim: &Simulator, grid: &Grid, first_id: u64) -> Result<Vec<TapObservation>, HarnessError> {
    let reps = grid.repetitions;
    (0..grid.requested())
        .into_par_iter()
        .map(|i| observe_tap(sim, first_id + i as u64, grid.positions[i / reps]))
        .collect()
}

/// Shifts an observation by a fitted zero-lag offset so that
/// `tdoa * speed` equals the calibrated distance difference.
fn corrected(obs: &TdoaObservation<f64>, speed: f64, intercept: f64) -> TdoaObservation<f64> {
    let obs = canonical(*obs);
    TdoaObservation { tdoa: obs.tdoa + intercept / speed, ..obs }
}

/// Calibrated time differences of both pairs to a position estimate.
pub fn locate_tap(
    lr: &TdoaObservation<f64>,
    tb: &TdoaObservation<f64>,
    profile: &CalibrationProfile,
) -> Result<TapEstimate<f64>, GeometryError> {
    if lr.pair != Pair::LeftRight || tb.pair != Pair::TopBottom {
        return Err(GeometryError::InvalidLayout(format!(
            "expected a left/right and a top/bottom observation, got {} and {}",
            lr.pair, tb.pair
        )));
    }
    let layout = &profile.layout;
    let lr = corrected(lr, profile.speed_x_cm_per_s, profile.intercept_x);
    let tb = corrected(tb, profile.speed_y_cm_per_s, profile.intercept_y);
    let d_lr = delta_from_tdoa(&lr, profile.speed_x_cm_per_s, layout)?;
    let d_tb = delta_from_tdoa(&tb, profile.speed_y_cm_per_s, layout)?;
    let intercepts = HyperbolaIntercepts::from_deltas(&d_lr, &d_tb, resolve_quadrant(&lr, &tb));
    solve_closed_form_scaled(&intercepts, layout, profile.anisotropy())
}

fn along(axis: Axis, p: (f64, f64)) -> f64 {
    match axis {
        Axis::X => p.0,
        Axis::Y => p.1,
    }
}

fn collect_warnings(observations: &[TapObservation], into: &mut Vec<String>) {
    into.extend(observations.iter().flat_map(|o| o.warnings.iter().cloned()));
}

/// Distance difference (second minus first sensor) for a known tap.
fn true_distance_diff(layout: &SensorLayout<f64>, pair: Pair, p: (f64, f64)) -> f64 {
    let [first, second] = pair.channels();
    layout.distance(p, second) - layout.distance(p, first)
}

fn calibration_samples(
    layout: &SensorLayout<f64>,
    axis: Axis,
    observations: &[TapObservation],
) -> Vec<CalibrationSample<f64>> {
    let pair = axis.pair();
    observations
        .iter()
        .filter_map(|o| {
            o.get(pair).map(|obs| {
                CalibrationSample::new(along(axis, o.truth), true_distance_diff(layout, pair, o.truth), obs.tdoa)
            })
        })
        .collect()
}

/// Per-location rows for a one-dimensional series, with positions recovered
/// from the fit when there is one.
fn one_d_rows(
    series: &str,
    axis: Axis,
    layout: &SensorLayout<f64>,
    grid: &Grid,
    observations: &[TapObservation],
    fit: Option<&AxisFit<f64>>,
    report: &mut RunReport,
) {
    let pair = axis.pair();
    let half_sep = layout.half_sep(axis);
    for (loc, chunk) in observations.chunks(grid.repetitions).enumerate() {
        let truth = grid.positions[loc];
        let tdoas: Vec<f64> = chunk.iter().filter_map(|o| o.get(pair).map(|t| t.tdoa)).collect();
        for o in chunk.iter().filter(|o| o.get(pair).is_none()) {
            report.failures.push(TapFailure::missed(o));
        }
        let mut row = LocationRow::new(series, truth, chunk.len());
        row.detected = tdoas.len();
        if !tdoas.is_empty() {
            row.tdoa = mean_and_stddev(&tdoas);
        }
        if let Some(fit) = fit {
            let located: Vec<LocatedTap<f64>> = tdoas
                .iter()
                .map(|&t| {
                    let p = one_d_position(t, fit, 0.0, half_sep).position;
                    let estimate = match axis {
                        Axis::X => (p, 0.0),
                        Axis::Y => (0.0, p),
                    };
                    LocatedTap { truth, estimate }
                })
                .collect();
            row.fill_estimates(&located);
        }
        report.rows.push(row);
    }
}

fn one_d_series(
    series: &str,
    spec: &ExperimentSpec,
    scenario: &Scenario,
    axis: Axis,
    first_id: u64,
    report: &mut RunReport,
) -> Result<Option<AxisFit<f64>>, HarnessError> {
    let sim = scenario.simulator(spec.seed)?;
    let offsets: Vec<f64> = spec.grid.positions.iter().map(|&p| along(spec.axis, p)).collect();
    let grid = Grid::along(axis, &offsets, spec.grid.repetitions);
    let observations = observe_grid(&sim, &grid, first_id)?;
    collect_warnings(&observations, &mut report.warnings);
    let samples = calibration_samples(&scenario.layout, axis, &observations);
    let fit = match fit_axis(axis, &samples) {
        Ok(fit) => Some(fit),
        Err(e) => {
            report.warnings.push(format!("{series}: no fit ({e})"));
            None
        }
    };
    one_d_rows(series, axis, &scenario.layout, &grid, &observations, fit.as_ref(), report);
    if let Some(fit) = &fit {
        report.fits.push(SeriesFit { series: series.to_string(), fit: fit.clone() });
    }
    Ok(fit)
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<(), HarnessError> {
    if spec.kind != kind {
        return Err(HarnessError::Usage(format!("expected a {kind} spec, got {}", spec.kind)));
    }
    spec.validate()
}

/// Taps along one sensor line; fits lag against distance difference.
pub fn run_linearity_1d(spec: &ExperimentSpec) -> Result<RunReport, HarnessError> {
    expect_kind(spec, ExperimentKind::Linearity1d)?;
    let start = Instant::now();
    let mut report = RunReport::new(spec.kind, spec.seed);
    one_d_series(spec.axis.name(), spec, &spec.scenario, spec.axis, 0, &mut report)?;
    report.finish(start);
    Ok(report)
}

/// The linearity experiment at two sample rates with the same seed.
pub fn run_sampling_sweep(spec: &ExperimentSpec) -> Result<RunReport, HarnessError> {
    expect_kind(spec, ExperimentKind::SamplingSweep)?;
    let start = Instant::now();
    let mut report = RunReport::new(spec.kind, spec.seed);
    let (low, high) = spec.sweep_rates;
    let mut fits = Vec::new();
    for rate in [low, high] {
        let mut scenario = spec.scenario.clone();
        scenario.detector.sample_rate = rate;
        fits.push(one_d_series(&format!("rate_{rate}"), spec, &scenario, spec.axis, 0, &mut report)?);
    }
    let n = spec.grid.positions.len();
    let (lo_rows, hi_rows) = report.rows.split_at(n);
    let better = lo_rows.iter().zip(hi_rows).filter(|(l, h)| h.tdoa.1 < l.tdoa.1).count();
    report.notes.push(format!("{high} Hz has lower tdoa stddev than {low} Hz at {better} of {n} locations"));
    if let [Some(l), Some(h)] = fits.as_slice() {
        report.notes.push(format!("r_squared {low} Hz = {:.6}, {high} Hz = {:.6}", l.r_squared, h.r_squared));
    }
    report.finish(start);
    Ok(report)
}

/// Fits both axes from taps along each sensor line.
///
/// The positions of `spec.grid` are read along `spec.axis` and reused for
/// both axes. The resulting profile is stored in the report.
pub fn run_calibrate(spec: &ExperimentSpec) -> Result<RunReport, HarnessError> {
    expect_kind(spec, ExperimentKind::Calibrate)?;
    let start = Instant::now();
    let mut report = RunReport::new(spec.kind, spec.seed);
    let per_axis = spec.grid.requested() as u64;
    let mut fits = Vec::new();
    for (i, axis) in [Axis::X, Axis::Y].into_iter().enumerate() {
        let id = CALIBRATION_ID_BASE + i as u64 * per_axis;
        let fit = one_d_series(axis.name(), spec, &spec.scenario, axis, id, &mut report)?;
        let fit = fit.ok_or(CalibrationError::Usage(format!("axis {axis} could not be fitted")))?;
        if fit.r_squared < 0.9 {
            report
                .warnings
                .push(format!("calibration quality: r_squared {:.4} on axis {axis} is below 0.9", fit.r_squared));
        }
        fits.push(fit);
    }
    report.profile = Some(CalibrationProfile::from_fits(&fits[0], &fits[1], spec.scenario.layout));
    report.finish(start);
    Ok(report)
}

/// Grid taps located with a calibration profile.
pub fn run_accuracy_2d(spec: &ExperimentSpec, profile: &CalibrationProfile) -> Result<RunReport, HarnessError> {
    expect_kind(spec, ExperimentKind::Accuracy2d)?;
    let start = Instant::now();
    let sim = spec.scenario.simulator(spec.seed)?;
    let observations = observe_grid(&sim, &spec.grid, 0)?;
    let mut report = RunReport::new(spec.kind, spec.seed);
    collect_warnings(&observations, &mut report.warnings);
    report.profile = Some(*profile);

    let estimates: Vec<Option<TapEstimate<f64>>> = observations
        .iter()
        .map(|o| match (&o.lr, &o.tb) {
            (Some(lr), Some(tb)) => match locate_tap(lr, tb, profile) {
                Ok(e) => Some(e),
                Err(e) => {
                    report.failures.push(TapFailure::unsolved(o, &e));
                    None
                }
            },
            _ => {
                report.failures.push(TapFailure::missed(o));
                None
            }
        })
        .collect();

    let mut all = Vec::new();
    for (loc, chunk) in observations.chunks(spec.grid.repetitions).enumerate() {
        let truth = spec.grid.positions[loc];
        let base = loc * spec.grid.repetitions;
        let mut row = LocationRow::new("grid", truth, chunk.len());
        row.detected = chunk.iter().filter(|o| o.lr.is_some() && o.tb.is_some()).count();
        let located: Vec<LocatedTap<f64>> = estimates[base..base + chunk.len()]
            .iter()
            .flatten()
            .map(|e| LocatedTap { truth, estimate: (e.x, e.y) })
            .collect();
        row.fill_estimates(&located);
        all.extend(located);
        report.rows.push(row);
    }
    if let Ok(stats) = location_stats(&all) {
        report.mean_abs_error = Some(stats.mean_abs_error);
    }
    report.finish(start);
    Ok(report)
}

/// Runs any experiment. Without a profile, `accuracy_2d` first calibrates
/// on the same scenario and seed with the default calibration grid.
pub fn run_experiment(spec: &ExperimentSpec, profile: Option<&CalibrationProfile>) -> Result<RunReport, HarnessError> {
    match spec.kind {
        ExperimentKind::Linearity1d => run_linearity_1d(spec),
        ExperimentKind::SamplingSweep => run_sampling_sweep(spec),
        ExperimentKind::Calibrate => run_calibrate(spec),
        ExperimentKind::Accuracy2d => match profile {
            Some(p) => run_accuracy_2d(spec, p),
            None => {
                let cal_spec = ExperimentSpec {
                    scenario: spec.scenario.clone(),
                    seed: spec.seed,
                    ..ExperimentSpec::default_for(ExperimentKind::Calibrate)
                };
                let cal = run_calibrate(&cal_spec)?;
                let profile = cal.profile.expect("calibration yields a profile");
                let mut report = run_accuracy_2d(spec, &profile)?;
                report.fits = cal.fits;
                report.warnings.splice(0..0, cal.warnings);
                Ok(report)
            }
        },
    }
}

/// One row of an observations CSV as written by the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    pub tap_id: u64,
    pub observation: TdoaObservation<f64>,
}

/// Reads `pair,tap_id,tdoa_seconds,...` rows.
pub fn read_observations_csv<R: Read>(input: R) -> Result<Vec<ObservationRecord>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::Usage(format!("observations CSV lacks a '{name}' column")))
    };
    let (c_pair, c_id, c_tdoa) = (col("pair")?, col("tap_id")?, col("tdoa_seconds")?);
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |what: &str| HarnessError::Usage(format!("observations row {}: bad {what}", line + 2));
        let pair: Pair = record[c_pair].parse().map_err(|_| bad("pair"))?;
        let tap_id: u64 = record[c_id].parse().map_err(|_| bad("tap_id"))?;
        let tdoa: f64 = record[c_tdoa].parse().map_err(|_| bad("tdoa_seconds"))?;
        out.push(ObservationRecord { tap_id, observation: TdoaObservation::new(pair, tdoa) });
    }
    Ok(out)
}

/// Matches left/right and top/bottom observations by tap ordinal and
/// locates each matched tap. Unmatched ordinals come back as errors.
pub fn locate_records(
    records: &[ObservationRecord],
    profile: &CalibrationProfile,
) -> Vec<(u64, Result<TapEstimate<f64>, String>)> {
    let find = |pair: Pair, id: u64| records.iter().find(|r| r.observation.pair == pair && r.tap_id == id);
    let mut ids: Vec<u64> = records.iter().map(|r| r.tap_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let result = match (find(Pair::LeftRight, id), find(Pair::TopBottom, id)) {
                (Some(lr), Some(tb)) => {
                    locate_tap(&lr.observation, &tb.observation, profile).map_err(|e| e.to_string())
                }
                (None, _) => Err("no left_right observation".to_string()),
                (_, None) => Err("no top_bottom observation".to_string()),
            };
            (id, result)
        })
        .collect()
}
