use std::fmt;
use std::str::FromStr;

use crate::config::{ConfigError, KeyValues};
use crate::geometry::{Axis, SensorLayout};
use crate::signal::DetectorConfig;
use crate::sim::{RegionSpeed, RenderConfig, Simulator, SurfaceModel};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Linearity1d,
    SamplingSweep,
    Calibrate,
    Accuracy2d,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Linearity1d,
        ExperimentKind::SamplingSweep,
        ExperimentKind::Calibrate,
        ExperimentKind::Accuracy2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Linearity1d => "linearity_1d",
            ExperimentKind::SamplingSweep => "sampling_sweep",
            ExperimentKind::Calibrate => "calibrate",
            ExperimentKind::Accuracy2d => "accuracy_2d",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::Usage(format!("unknown experiment '{s}'")))
    }
}

/// Physical and acquisition settings shared by every experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    pub surface: SurfaceModel,
    pub layout: SensorLayout<f64>,
    pub detector: DetectorConfig,
    pub render: RenderConfig,
}

impl Scenario {
    pub fn simulator(&self, seed: u64) -> Result<Simulator, HarnessError> {
        Ok(Simulator::new(self.layout, self.surface, self.detector, self.render, seed)?)
    }
}

/// Where to tap and how often.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub positions: Vec<(f64, f64)>,
    pub repetitions: usize,
}

impl Grid {
    /// Taps along one sensor axis.
    pub fn along(axis: Axis, offsets: &[f64], repetitions: usize) -> Self {
        let positions = offsets
            .iter()
            .map(|&p| match axis {
                Axis::X => (p, 0.0),
                Axis::Y => (0.0, p),
            })
            .collect();
        Self { positions, repetitions }
    }

    /// Cartesian product of the two coordinate lists, row by row in y.
    pub fn product(xs: &[f64], ys: &[f64], repetitions: usize) -> Self {
        let positions = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
        Self { positions, repetitions }
    }

    pub fn requested(&self) -> usize {
        self.positions.len() * self.repetitions
    }
}

fn steps(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub scenario: Scenario,
    pub grid: Grid,
    /// Axis for the one-dimensional experiments.
    pub axis: Axis,
    /// Rates compared by the sampling sweep, low then high.
    pub sweep_rates: (u32, u32),
    pub seed: u64,
}

pub const SCENARIO_KEYS: &[&str] = &[
    "seed",
    "surface.speed_x_cm_per_s",
    "surface.speed_y_cm_per_s",
    "surface.noise_stddev",
    "surface.peak_amplitude",
    "surface.attenuation_per_cm",
    "surface.rise_samples",
    "surface.decay_constant_samples",
    "surface.onset_jitter_stddev_samples",
    "surface.region_y_below_cm",
    "surface.region_speed_scale",
    "layout.half_sep_x_cm",
    "layout.half_sep_y_cm",
    "detector.detect_threshold",
    "detector.onset_threshold",
    "detector.debounce_chunks",
    "detector.chunk_size",
    "detector.sample_rate",
    "sim.stream_chunks",
    "sim.lead_in_min_samples",
    "sim.lead_in_max_samples",
    "sim.max_device_offset_s",
    "sim.tap_spacing_chunks",
    "grid.axis",
    "grid.positions_cm",
    "grid.x_cm",
    "grid.y_cm",
    "grid.taps",
    "grid.repetitions",
    "sweep.low_rate",
    "sweep.high_rate",
];

impl ExperimentSpec {
    /// Built-in defaults for `kind`.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let axis = Axis::X;
        let grid = match kind {
            ExperimentKind::Linearity1d => Grid::along(axis, &steps(-20.0, 20.0, 2.5), 10),
            ExperimentKind::SamplingSweep => Grid::along(axis, &steps(-22.5, 22.5, 5.0), 10),
            ExperimentKind::Calibrate => Grid::along(axis, &steps(-25.0, 25.0, 1.0), 10),
            ExperimentKind::Accuracy2d => {
                let g = steps(-20.0, 20.0, 10.0);
                Grid::product(&g, &g, 10)
            }
        };
        Self { kind, scenario: Scenario::default(), grid, axis, sweep_rates: (44_100, 192_000), seed: 1 }
    }

    /// Defaults for `kind`, overridden by `kv`.
    pub fn from_kv(kind: ExperimentKind, kv: &KeyValues) -> Result<Self, HarnessError> {
        if let Some(k) = kv.keys().find(|k| !SCENARIO_KEYS.contains(k)) {
            return Err(ConfigError::Unknown(k.to_string()).into());
        }
        let mut spec = Self::default_for(kind);
        kv.apply("seed", &mut spec.seed)?;

        let s = &mut spec.scenario.surface;
        kv.apply("surface.speed_x_cm_per_s", &mut s.speed_x)?;
        kv.apply("surface.speed_y_cm_per_s", &mut s.speed_y)?;
        kv.apply("surface.noise_stddev", &mut s.noise_stddev)?;
        kv.apply("surface.peak_amplitude", &mut s.peak_amplitude)?;
        kv.apply("surface.attenuation_per_cm", &mut s.attenuation_per_cm)?;
        kv.apply("surface.rise_samples", &mut s.rise_samples)?;
        kv.apply("surface.decay_constant_samples", &mut s.decay_constant)?;
        kv.apply("surface.onset_jitter_stddev_samples", &mut s.onset_jitter_stddev)?;
        match (kv.parsed::<f64>("surface.region_y_below_cm")?, kv.parsed::<f64>("surface.region_speed_scale")?) {
            (Some(y_below_cm), Some(speed_scale)) => s.region_speed = Some(RegionSpeed { y_below_cm, speed_scale }),
            (None, None) => {}
            _ => {
                return Err(HarnessError::Usage(
                    "surface.region_y_below_cm and surface.region_speed_scale go together".into(),
                ))
            }
        }

        let mut sx = spec.scenario.layout.half_sep_x;
        let mut sy = spec.scenario.layout.half_sep_y;
        kv.apply("layout.half_sep_x_cm", &mut sx)?;
        kv.apply("layout.half_sep_y_cm", &mut sy)?;
        spec.scenario.layout = SensorLayout::new(sx, sy).map_err(|e| HarnessError::Usage(e.to_string()))?;

        let d = &mut spec.scenario.detector;
        kv.apply("detector.detect_threshold", &mut d.detect_threshold)?;
        kv.apply("detector.onset_threshold", &mut d.onset_threshold)?;
        kv.apply("detector.debounce_chunks", &mut d.debounce_chunks)?;
        kv.apply("detector.chunk_size", &mut d.chunk_size)?;
        kv.apply("detector.sample_rate", &mut d.sample_rate)?;

        let r = &mut spec.scenario.render;
        kv.apply("sim.stream_chunks", &mut r.stream_chunks)?;
        kv.apply("sim.lead_in_min_samples", &mut r.lead_in_samples.0)?;
        kv.apply("sim.lead_in_max_samples", &mut r.lead_in_samples.1)?;
        kv.apply("sim.max_device_offset_s", &mut r.max_device_offset_s)?;
        kv.apply("sim.tap_spacing_chunks", &mut r.tap_spacing_chunks)?;

        if let Some(axis) = kv.get("grid.axis") {
            spec.axis = match axis {
                "x" => Axis::X,
                "y" => Axis::Y,
                other => {
                    return Err(ConfigError::Invalid {
                        key: "grid.axis".into(),
                        value: other.into(),
                        reason: "expected 'x' or 'y'".into(),
                    }
                    .into())
                }
            };
        }
        kv.apply("grid.repetitions", &mut spec.grid.repetitions)?;
        let reps = spec.grid.repetitions;
        if let Some(taps) = kv.point_list("grid.taps")? {
            spec.grid = Grid { positions: taps, repetitions: reps };
        } else if kind == ExperimentKind::Accuracy2d {
            let xs = kv.number_list("grid.x_cm")?;
            let ys = kv.number_list("grid.y_cm")?;
            if xs.is_some() || ys.is_some() {
                let default = steps(-20.0, 20.0, 10.0);
                spec.grid = Grid::product(xs.as_deref().unwrap_or(&default), ys.as_deref().unwrap_or(&default), reps);
            }
        } else {
            let offsets = match kv.number_list("grid.positions_cm")? {
                Some(p) => p,
                None => spec.grid.positions.iter().map(|p| p.0 + p.1).collect(),
            };
            spec.grid = Grid::along(spec.axis, &offsets, reps);
        }

        kv.apply("sweep.low_rate", &mut spec.sweep_rates.0)?;
        kv.apply("sweep.high_rate", &mut spec.sweep_rates.1)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.grid.repetitions == 0 {
            return Err(HarnessError::Usage("grid.repetitions must be at least 1".into()));
        }
        if self.grid.positions.is_empty() {
            return Err(HarnessError::Usage("the tap grid is empty".into()));
        }
        let bound = 2.0 * self.scenario.layout.half_sep_x.max(self.scenario.layout.half_sep_y);
        if let Some(p) = self.grid.positions.iter().find(|p| !(p.0.abs() <= bound && p.1.abs() <= bound)) {
            return Err(HarnessError::Usage(format!(
                "tap ({}, {}) lies outside the {bound} cm surface bound",
                p.0, p.1
            )));
        }
        self.scenario.detector.validate()?;
        self.scenario.surface.validate(self.scenario.detector.detect_threshold)?;
        Ok(())
    }
}
