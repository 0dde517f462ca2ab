//! Forward model of a tap on an anisotropic surface.
//!
//! Travel time from the tap to a sensor uses an elliptical slowness metric,
//! `t = sqrt((dx / speed_x)^2 + (dy / speed_y)^2)`, which reduces to
//! Euclidean distance over speed when both speeds match. Each sensor channel
//! receives Gaussian background noise plus an impulse: a linear rise to the
//! attenuated peak followed by an exponential decay.
//!
//! The two stereo devices have unrelated clocks. Every tap draws an
//! independent start offset per device, so absolute onset indices differ
//! between devices while within-device lags carry the geometry.
//!
//! Randomness comes from a ChaCha stream keyed by `(seed, tap_id, purpose)`,
//! so a tap renders identically whether it is generated alone, in a batch,
//! or on another thread.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::geometry::SensorLayout;
use crate::numfmt::sig9;
use crate::signal::{Channel, ChannelMap, DetectorConfig, DeviceStream, Pair, SignalError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid surface model: {0}")]
    Surface(String),
    #[error("invalid render settings: {0}")]
    Render(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Multiplies both speeds for taps below a horizontal line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSpeed {
    pub y_below_cm: f64,
    pub speed_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceModel {
    pub speed_x: f64,
    pub speed_y: f64,
    pub noise_stddev: f64,
    pub peak_amplitude: f64,
    pub attenuation_per_cm: f64,
    pub rise_samples: usize,
    pub decay_constant: f64,
    pub onset_jitter_stddev: f64,
    pub region_speed: Option<RegionSpeed>,
}

impl Default for SurfaceModel {
    fn default() -> Self {
        Self {
            speed_x: 45_014.0,
            speed_y: 37_259.0,
            noise_stddev: 20.0,
            peak_amplitude: 8_000.0,
            attenuation_per_cm: 0.01,
            rise_samples: 8,
            decay_constant: 1_500.0,
            onset_jitter_stddev: 2.0,
            region_speed: None,
        }
    }
}

impl SurfaceModel {
    /// Same surface with no noise, jitter or attenuation.
    pub fn noiseless(self) -> Self {
        Self { noise_stddev: 0.0, onset_jitter_stddev: 0.0, attenuation_per_cm: 0.0, ..self }
    }

    pub fn isotropic(speed: f64) -> Self {
        Self { speed_x: speed, speed_y: speed, ..Self::default() }
    }

    pub fn validate(&self, detect_threshold: i32) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Surface(msg));
        if !(self.speed_x > 0.0 && self.speed_y > 0.0) || !self.speed_x.is_finite() || !self.speed_y.is_finite() {
            return bad(format!("speeds must be positive, got ({}, {})", self.speed_x, self.speed_y));
        }
        if !(self.peak_amplitude > detect_threshold as f64 && self.peak_amplitude <= i16::MAX as f64) {
            return bad(format!("peak amplitude {} must lie in ({detect_threshold}, 32767]", self.peak_amplitude));
        }
        if !(0.0..1.0).contains(&self.attenuation_per_cm) {
            return bad(format!("attenuation {} must lie in [0, 1)", self.attenuation_per_cm));
        }
        if self.rise_samples == 0 {
            return bad("rise_samples must be at least 1".into());
        }
        if !(self.decay_constant > 0.0) {
            return bad(format!("decay constant {} must be positive", self.decay_constant));
        }
        if !(self.noise_stddev >= 0.0) || !(self.onset_jitter_stddev >= 0.0) {
            return bad("noise and jitter deviations must be non-negative".into());
        }
        if let Some(r) = self.region_speed {
            if !(r.speed_scale > 0.0) {
                return bad(format!("region speed scale {} must be positive", r.speed_scale));
            }
        }
        Ok(())
    }

    /// Amplitude reaching a sensor `distance_cm` away.
    pub fn effective_peak(&self, distance_cm: f64) -> f64 {
        self.peak_amplitude * (1.0 - self.attenuation_per_cm).powf(distance_cm)
    }

    /// Impulse value `k` samples after its start.
    pub fn impulse(&self, peak: f64, k: usize) -> f64 {
        let rise = self.rise_samples;
        if k < rise {
            peak * (k + 1) as f64 / rise as f64
        } else {
            peak * (-((k + 1 - rise) as f64) / self.decay_constant).exp()
        }
    }
}

/// Travel time from `tap` to `sensor`.
pub fn travel_time(tap: (f64, f64), sensor: (f64, f64), surface: &SurfaceModel) -> f64 {
    let dx = (tap.0 - sensor.0) / surface.speed_x;
    let dy = (tap.1 - sensor.1) / surface.speed_y;
    let t = dx.hypot(dy);
    match surface.region_speed {
        Some(r) if tap.1 < r.y_below_cm => t / r.speed_scale,
        _ => t,
    }
}

/// Arrival times in `Channel::ALL` order (left, right, top, bottom).
pub fn arrival_times(tap: (f64, f64), layout: &SensorLayout<f64>, surface: &SurfaceModel) -> [f64; 4] {
    Channel::ALL.map(|c| travel_time(tap, layout.sensor_position(c), surface))
}

fn device_index(pair: Pair) -> usize {
    match pair {
        Pair::LeftRight => 0,
        Pair::TopBottom => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Chunks rendered per tap.
    pub stream_chunks: usize,
    /// Inclusive range for the quiet lead-in before a tap, in samples.
    pub lead_in_samples: (usize, usize),
    /// Upper bound of the per-device start offset, in seconds.
    pub max_device_offset_s: f64,
    /// Distance between consecutive taps of a session, in chunks.
    pub tap_spacing_chunks: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { stream_chunks: 4, lead_in_samples: (512, 12_000), max_device_offset_s: 0.005, tap_spacing_chunks: 10 }
    }
}

/// A planned tap: geometry plus every random draw except the noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTap {
    pub tap_id: u64,
    pub true_position: (f64, f64),
    pub arrival_times: [f64; 4],
    pub device_start_offsets: [f64; 2],
    pub jitter_samples: [f64; 4],
    pub lead_in_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectedEvent {
    pub tap_id: u64,
    pub position: (f64, f64),
    pub sensor: Channel,
    pub injected_sample_index: u64,
    pub effective_peak: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub events: Vec<InjectedEvent>,
    pub warnings: Vec<String>,
}

impl GroundTruth {
    pub fn index_of(&self, tap_id: u64, sensor: Channel) -> Option<u64> {
        self.events.iter().find(|e| e.tap_id == tap_id && e.sensor == sensor).map(|e| e.injected_sample_index)
    }

    /// CSV with columns `tap_id,x_cm,y_cm,sensor,injected_sample_index`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tap_id", "x_cm", "y_cm", "sensor", "injected_sample_index"])?;
        for e in &self.events {
            w.write_record([
                e.tap_id.to_string(),
                sig9(e.position.0),
                sig9(e.position.1),
                e.sensor.name().to_string(),
                e.injected_sample_index.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Device streams (left/right first, then top/bottom) and what was injected.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub streams: [DeviceStream; 2],
    pub truth: GroundTruth,
}

impl Rendering {
    pub fn stream(&self, pair: Pair) -> &DeviceStream {
        &self.streams[device_index(pair)]
    }
}

const PURPOSE_TIMING: u64 = 0;
const PURPOSE_NOISE: u64 = 1;
const SESSION_ID: u64 = u64::MAX >> 2;
/// Decay tail below this amplitude is not rendered.
const IMPULSE_FLOOR: f64 = 1e-3;

fn rng_for(seed: u64, tap_id: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tap_id << 2) | purpose);
    rng
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub layout: SensorLayout<f64>,
    pub surface: SurfaceModel,
    pub detector: DetectorConfig,
    pub render: RenderConfig,
    pub seed: u64,
}

impl Simulator {
    pub fn new(
        layout: SensorLayout<f64>,
        surface: SurfaceModel,
        detector: DetectorConfig,
        render: RenderConfig,
        seed: u64,
    ) -> Result<Self, SimError> {
        detector.validate()?;
        surface.validate(detector.detect_threshold)?;
        let (lo, hi) = render.lead_in_samples;
        if lo > hi {
            return Err(SimError::Render(format!("lead-in range {lo}..={hi} is empty")));
        }
        if !(render.max_device_offset_s >= 0.0) {
            return Err(SimError::Render("device offset bound must be non-negative".into()));
        }
        if render.stream_chunks == 0 || render.tap_spacing_chunks < render.stream_chunks {
            return Err(SimError::Render(format!(
                "need 0 < stream_chunks ({}) <= tap_spacing_chunks ({})",
                render.stream_chunks, render.tap_spacing_chunks
            )));
        }
        Ok(Self { layout, surface, detector, render, seed })
    }

    fn rate(&self) -> f64 {
        self.detector.sample_rate as f64
    }

    fn tap_samples(&self) -> usize {
        self.render.stream_chunks * self.detector.chunk_size
    }

    /// Draws the lead-in, device offsets and onset jitter for one tap.
    pub fn plan(&self, tap_id: u64, position: (f64, f64)) -> SimulatedTap {
        let mut rng = rng_for(self.seed, tap_id, PURPOSE_TIMING);
        let (lo, hi) = self.render.lead_in_samples;
        let lead_in_samples = rng.random_range(lo..=hi);
        let max_off = self.render.max_device_offset_s;
        let device_start_offsets = [0, 1].map(|_| if max_off > 0.0 { rng.random_range(0.0..max_off) } else { 0.0 });
        let sigma = self.surface.onset_jitter_stddev;
        let jitter_samples = [0; 4].map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sigma
        });
        SimulatedTap {
            tap_id,
            true_position: position,
            arrival_times: arrival_times(position, &self.layout, &self.surface),
            device_start_offsets,
            jitter_samples,
            lead_in_samples,
        }
    }

    /// First impulse sample of `channel`, relative to the tap's own slot.
    pub fn start_index(&self, tap: &SimulatedTap, channel: Channel) -> u64 {
        let i = Channel::ALL.iter().position(|&c| c == channel).unwrap();
        let dev = device_index(channel.pair());
        let rate = self.rate();
        let at = tap.lead_in_samples as f64
            + tap.arrival_times[i] * rate
            + tap.device_start_offsets[dev] * rate
            + tap.jitter_samples[i];
        at.round().max(0.0) as u64
    }

    fn check_fits(&self, tap: &SimulatedTap) -> Result<(), SimError> {
        let limit = self.tap_samples() as u64;
        for c in Channel::ALL {
            let start = self.start_index(tap, c);
            if start + self.surface.rise_samples as u64 > limit {
                return Err(SimError::Render(format!(
                    "tap {} on {c} starts at sample {start}, past the {limit}-sample stream",
                    tap.tap_id
                )));
            }
        }
        Ok(())
    }

    fn inject(&self, tap: &SimulatedTap, base: u64, streams: &mut [Vec<f64>; 4], truth: &mut GroundTruth) {
        for (i, c) in Channel::ALL.into_iter().enumerate() {
            let start = base + self.start_index(tap, c);
            let distance = self.layout.distance(tap.true_position, c);
            let peak = self.surface.effective_peak(distance);
            if peak < self.detector.detect_threshold as f64 {
                truth.warnings.push(format!(
                    "tap {}: peak {:.1} at {c} is below the detect threshold {}",
                    tap.tap_id, peak, self.detector.detect_threshold
                ));
            }
            let buf = &mut streams[i];
            let rise = self.surface.rise_samples;
            let step = (-1.0 / self.surface.decay_constant).exp();
            let mut tail = peak;
            for (k, v) in buf.iter_mut().skip(start as usize).enumerate() {
                if k < rise {
                    *v += self.surface.impulse(peak, k);
                } else {
                    tail *= step;
                    if tail < IMPULSE_FLOOR {
                        break;
                    }
                    *v += tail;
                }
            }
            truth.events.push(InjectedEvent {
                tap_id: tap.tap_id,
                position: tap.true_position,
                sensor: c,
                injected_sample_index: start,
                effective_peak: peak,
            });
        }
    }

    fn finish(&self, mut analog: [Vec<f64>; 4], noise_id: u64, truth: GroundTruth) -> Rendering {
        if self.surface.noise_stddev > 0.0 {
            let normal = Normal::new(0.0, self.surface.noise_stddev).unwrap();
            let mut rng = rng_for(self.seed, noise_id, PURPOSE_NOISE);
            for buf in analog.iter_mut() {
                for v in buf.iter_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
        }
        let quantize = |buf: &[f64]| -> Vec<i16> {
            buf.iter().map(|v| v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).collect()
        };
        let rate = self.detector.sample_rate;
        let device = |pair: Pair, a: &[f64], b: &[f64]| DeviceStream {
            map: ChannelMap::for_pair(pair),
            sample_rate: rate,
            samples: [quantize(a), quantize(b)],
        };
        Rendering {
            streams: [device(Pair::LeftRight, &analog[0], &analog[1]), device(Pair::TopBottom, &analog[2], &analog[3])],
            truth,
        }
    }

    /// Renders a planned tap into its own `stream_chunks`-chunk streams.
    pub fn synthesize(&self, tap: &SimulatedTap) -> Result<Rendering, SimError> {
        self.check_fits(tap)?;
        let n = self.tap_samples();
        let mut analog = [0; 4].map(|_| vec![0.0; n]);
        let mut truth = GroundTruth::default();
        self.inject(tap, 0, &mut analog, &mut truth);
        Ok(self.finish(analog, tap.tap_id, truth))
    }

    pub fn render_tap(&self, tap_id: u64, position: (f64, f64)) -> Result<Rendering, SimError> {
        self.synthesize(&self.plan(tap_id, position))
    }

    /// Renders taps one after another, `tap_spacing_chunks` apart, into a
    /// single pair of device streams. Tap ids are the slice indices.
    pub fn render_session(&self, positions: &[(f64, f64)]) -> Result<Rendering, SimError> {
        let spacing = (self.render.tap_spacing_chunks * self.detector.chunk_size) as u64;
        let n = match positions.len() {
            0 => 0,
            k => (k as u64 - 1) * spacing + self.tap_samples() as u64,
        } as usize;
        let mut analog = [0; 4].map(|_| vec![0.0; n]);
        let mut truth = GroundTruth::default();
        for (j, &p) in positions.iter().enumerate() {
            let tap = self.plan(j as u64, p);
            self.check_fits(&tap)?;
            self.inject(&tap, j as u64 * spacing, &mut analog, &mut truth);
        }
        Ok(self.finish(analog, SESSION_ID, truth))
    }
}
