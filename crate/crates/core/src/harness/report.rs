use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::calibration::{mean_and_stddev, AxisFit, CalibrationProfile, LocatedTap};
use crate::geometry::GeometryError;
use crate::numfmt::sig9;

use super::{ExperimentKind, HarnessError, TapObservation};

pub const REPORT_HEADER: [&str; 14] = [
    "series",
    "true_x_cm",
    "true_y_cm",
    "requested",
    "detected",
    "solved",
    "mean_tdoa_s",
    "stddev_tdoa_s",
    "mean_x_cm",
    "mean_y_cm",
    "stddev_x_cm",
    "stddev_y_cm",
    "mean_abs_err_x_cm",
    "mean_abs_err_y_cm",
];

/// Statistics for one requested location of one series. Quantities with no
/// data are NaN and written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationRow {
    pub series: String,
    pub truth: (f64, f64),
    pub requested: usize,
    pub detected: usize,
    pub solved: usize,
    /// Mean and sample stddev of the lag, seconds.
    pub tdoa: (f64, f64),
    pub mean: (f64, f64),
    pub stddev: (f64, f64),
    pub mean_abs_error: (f64, f64),
}

impl LocationRow {
    pub fn new(series: &str, truth: (f64, f64), requested: usize) -> Self {
        let nan = (f64::NAN, f64::NAN);
        Self {
            series: series.to_string(),
            truth,
            requested,
            detected: 0,
            solved: 0,
            tdoa: nan,
            mean: nan,
            stddev: nan,
            mean_abs_error: nan,
        }
    }

    pub fn fill_estimates(&mut self, located: &[LocatedTap<f64>]) {
        self.solved = located.len();
        if located.is_empty() {
            return;
        }
        let xs: Vec<f64> = located.iter().map(|t| t.estimate.0).collect();
        let ys: Vec<f64> = located.iter().map(|t| t.estimate.1).collect();
        let (mx, sx) = mean_and_stddev(&xs);
        let (my, sy) = mean_and_stddev(&ys);
        let n = located.len() as f64;
        self.mean = (mx, my);
        self.stddev = (sx, sy);
        self.mean_abs_error = (
            xs.iter().map(|x| (x - self.truth.0).abs()).sum::<f64>() / n,
            ys.iter().map(|y| (y - self.truth.1).abs()).sum::<f64>() / n,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFit {
    pub series: String,
    pub fit: AxisFit<f64>,
}

/// A requested tap that produced no estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TapFailure {
    pub tap_id: u64,
    pub truth: (f64, f64),
    /// `detect` or `solve`.
    pub stage: &'static str,
    pub reason: String,
}

impl TapFailure {
    pub fn missed(o: &TapObservation) -> Self {
        let mut silent = Vec::new();
        if o.lr.is_none() {
            silent.push("left_right");
        }
        if o.tb.is_none() {
            silent.push("top_bottom");
        }
        Self {
            tap_id: o.tap_id,
            truth: o.truth,
            stage: "detect",
            reason: format!("no detection on {}", silent.join(" and ")),
        }
    }

    pub fn unsolved(o: &TapObservation, err: &GeometryError) -> Self {
        Self { tap_id: o.tap_id, truth: o.truth, stage: "solve", reason: err.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub rows: Vec<LocationRow>,
    pub fits: Vec<SeriesFit>,
    /// Over every solved tap, per axis.
    pub mean_abs_error: Option<(f64, f64)>,
    pub failures: Vec<TapFailure>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub profile: Option<CalibrationProfile>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(HarnessError::Usage(format!("unknown report format '{other}' (csv or text)"))),
        }
    }
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        sig9(v)
    }
}

impl RunReport {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            rows: Vec::new(),
            fits: Vec::new(),
            mean_abs_error: None,
            failures: Vec::new(),
            warnings: Vec::new(),
            notes: Vec::new(),
            profile: None,
            elapsed: Duration::ZERO,
        }
    }

    pub(crate) fn finish(&mut self, start: Instant) {
        self.elapsed = start.elapsed();
    }

    pub fn requested(&self) -> usize {
        self.rows.iter().map(|r| r.requested).sum()
    }

    pub fn detected(&self) -> usize {
        self.rows.iter().map(|r| r.detected).sum()
    }

    pub fn solved(&self) -> usize {
        self.rows.iter().map(|r| r.solved).sum()
    }

    pub fn fit(&self, series: &str) -> Option<&AxisFit<f64>> {
        self.fits.iter().find(|f| f.series == series).map(|f| &f.fit)
    }

    pub fn series(&self, series: &str) -> impl Iterator<Item = &LocationRow> {
        let series = series.to_string();
        self.rows.iter().filter(move |r| r.series == series)
    }

    /// One row per location and series, nine significant digits. Runtime
    /// is left out so equal seeds give equal bytes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.series.clone(),
                sig9(r.truth.0),
                sig9(r.truth.1),
                r.requested.to_string(),
                r.detected.to_string(),
                r.solved.to_string(),
                cell(r.tdoa.0),
                cell(r.tdoa.1),
                cell(r.mean.0),
                cell(r.mean.1),
                cell(r.stddev.0),
                cell(r.stddev.1),
                cell(r.mean_abs_error.0),
                cell(r.mean_abs_error.1),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.kind);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ =
            writeln!(s, "taps: requested {}, detected {}, solved {}", self.requested(), self.detected(), self.solved());
        for f in &self.fits {
            let _ = writeln!(
                s,
                "fit {}: speed {} cm/s, intercept {} cm, r_squared {}, samples {}",
                f.series,
                sig9(f.fit.speed),
                sig9(f.fit.intercept),
                sig9(f.fit.r_squared),
                f.fit.samples
            );
        }
        if let Some((ex, ey)) = self.mean_abs_error {
            let _ = writeln!(s, "mean abs error: x {} cm, y {} cm", sig9(ex), sig9(ey));
        }
        if let Some(p) = &self.profile {
            let _ = writeln!(s, "profile:");
            for line in p.to_text().lines() {
                let _ = writeln!(s, "  {line}");
            }
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = writeln!(s, "failures: {}", self.failures.len());
        for f in &self.failures {
            let _ = writeln!(
                s,
                "  tap {} at ({}, {}) [{}]: {}",
                f.tap_id,
                sig9(f.truth.0),
                sig9(f.truth.1),
                f.stage,
                f.reason
            );
        }
        let _ = writeln!(s, "warnings: {}", self.warnings.len());
        for w in &self.warnings {
            let _ = writeln!(s, "  {w}");
        }
        let _ = writeln!(s, "runtime: {:.3} s", self.elapsed.as_secs_f64());
        s
    }
}

/// Writes the report to `path`, or stdout when `path` is `None`.
pub fn report_emit(report: &RunReport, format: ReportFormat, path: Option<&Path>) -> Result<(), HarnessError> {
    let mut bytes = Vec::new();
    match format {
        ReportFormat::Csv => report.write_csv(&mut bytes)?,
        ReportFormat::Text => bytes.extend_from_slice(report.to_text().as_bytes()),
    }
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}
