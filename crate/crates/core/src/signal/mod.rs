//! Sampled-signal side of the pipeline: per-device chunk streams in, signed
//! per-pair time differences out.
//!
//! Each stereo device carries one sensor pair and has its own sample clock.
//! Nothing in this module compares sample indices across devices.

mod detector;
mod onset;
mod pcm;

pub use detector::{run_detector, write_observations_csv, Detection, DeviceDetector};
pub use onset::{detect_onset, pair_tdoa, refine_onset};
pub use pcm::{export_pcm, ingest_pcm_file, ChannelMap, DeviceStream, PcmChunks};

use std::fmt;

use thiserror::Error;

use crate::Scalar;

/// Sample rates accepted by [`DetectorConfig`].
pub const SUPPORTED_SAMPLE_RATES: [u32; 4] = [44_100, 48_000, 96_000, 192_000];

/// One of the four contact sensors on the cross.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Left,
    Right,
    Top,
    Bottom,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Left, Channel::Right, Channel::Top, Channel::Bottom];

    /// The device (sensor pair) this channel is wired to.
    pub fn pair(self) -> Pair {
        match self {
            Channel::Left | Channel::Right => Pair::LeftRight,
            Channel::Top | Channel::Bottom => Pair::TopBottom,
        }
    }

    /// `+1` for the sensor on the positive side of its axis (Right, Top).
    pub fn axis_sign(self) -> i8 {
        match self {
            Channel::Right | Channel::Top => 1,
            Channel::Left | Channel::Bottom => -1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Left => "left",
            Channel::Right => "right",
            Channel::Top => "top",
            Channel::Bottom => "bottom",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Channel {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Channel::Left),
            "right" => Ok(Channel::Right),
            "top" => Ok(Channel::Top),
            "bottom" => Ok(Channel::Bottom),
            other => Err(SignalError::Usage(format!("unknown channel '{other}'"))),
        }
    }
}

/// A sensor pair sharing one stereo device and therefore one sample clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pair {
    LeftRight,
    TopBottom,
}

impl Pair {
    pub const ALL: [Pair; 2] = [Pair::LeftRight, Pair::TopBottom];

    /// Channels in listing order: stereo slot 0 then slot 1.
    pub fn channels(self) -> [Channel; 2] {
        match self {
            Pair::LeftRight => [Channel::Left, Channel::Right],
            Pair::TopBottom => [Channel::Top, Channel::Bottom],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pair::LeftRight => "left_right",
            Pair::TopBottom => "top_bottom",
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Pair {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lr" | "left_right" | "leftright" => Ok(Pair::LeftRight),
            "tb" | "top_bottom" | "topbottom" => Ok(Pair::TopBottom),
            other => Err(SignalError::Usage(format!("unknown sensor pair '{other}'"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("cross-device comparison of {0} and {1}: devices have independent clocks")]
    CrossDevice(Channel, Channel),
    #[error("stream integrity: expected chunk {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
    #[error("PCM format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A block of signed 16-bit amplitudes read from one channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleChunk {
    pub channel: Channel,
    pub samples: Vec<i16>,
    /// Ordinal of this chunk within its device stream.
    pub chunk_index: u64,
    pub sample_rate: u32,
}

/// The two channels of one device read together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPair {
    pub first: SampleChunk,
    pub second: SampleChunk,
}

impl ChunkPair {
    pub fn pair(&self) -> Pair {
        self.first.channel.pair()
    }

    pub fn chunk_index(&self) -> u64 {
        self.first.chunk_index
    }

    pub fn sample_rate(&self) -> u32 {
        self.first.sample_rate
    }

    pub fn slot(&self, slot: usize) -> &SampleChunk {
        if slot == 0 {
            &self.first
        } else {
            &self.second
        }
    }

    pub(crate) fn check(&self) -> Result<(), SignalError> {
        let (a, b) = (&self.first, &self.second);
        if a.channel == b.channel {
            return Err(SignalError::Usage(format!("both slots carry channel {}", a.channel)));
        }
        if a.channel.pair() != b.channel.pair() {
            return Err(SignalError::CrossDevice(a.channel, b.channel));
        }
        if a.chunk_index != b.chunk_index || a.sample_rate != b.sample_rate {
            return Err(SignalError::Inconsistent(
                "channels of one device disagree on chunk index or sample rate".into(),
            ));
        }
        if a.samples.len() != b.samples.len() {
            return Err(SignalError::Inconsistent(format!(
                "channel lengths differ within chunk {}: {} vs {}",
                a.chunk_index,
                a.samples.len(),
                b.samples.len()
            )));
        }
        Ok(())
    }
}

/// First threshold crossing on a channel, located on that device's clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnsetEvent {
    pub channel: Channel,
    /// `chunk_index * chunk_size + in-chunk index`.
    pub global_sample_index: u64,
    pub sample_rate: u32,
}

impl OnsetEvent {
    pub fn new(channel: Channel, global_sample_index: u64, sample_rate: u32) -> Self {
        Self { channel, global_sample_index, sample_rate }
    }

    pub fn in_chunk(chunk: &SampleChunk, index: usize, chunk_size: usize) -> Self {
        Self::new(chunk.channel, chunk.chunk_index * chunk_size as u64 + index as u64, chunk.sample_rate)
    }

    pub fn onset_time(&self) -> f64 {
        self.global_sample_index as f64 / self.sample_rate as f64
    }
}

/// Which of the two listed sensors heard the tap first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FirstArrival {
    FirstListed,
    SecondListed,
    /// Equal onsets; geometry treats this as a zero distance difference.
    Indeterminate,
}

impl FirstArrival {
    pub fn flipped(self) -> Self {
        match self {
            FirstArrival::FirstListed => FirstArrival::SecondListed,
            FirstArrival::SecondListed => FirstArrival::FirstListed,
            FirstArrival::Indeterminate => FirstArrival::Indeterminate,
        }
    }
}

/// Signed time difference for one sensor pair.
///
/// `tdoa = t(sensors[1]) - t(sensors[0])`, so a positive value means the
/// first-listed sensor heard the tap first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdoaObservation<T> {
    pub pair: Pair,
    pub sensors: [Channel; 2],
    pub tdoa: T,
    pub first_arrival: FirstArrival,
}

impl<T: Scalar> TdoaObservation<T> {
    /// Builds an observation in the pair's canonical listing order, deriving
    /// `first_arrival` from the sign of `tdoa`.
    pub fn new(pair: Pair, tdoa: T) -> Self {
        Self::with_order(pair.channels(), tdoa)
    }

    pub fn with_order(sensors: [Channel; 2], tdoa: T) -> Self {
        let first_arrival = if tdoa > T::zero() {
            FirstArrival::FirstListed
        } else if tdoa < T::zero() {
            FirstArrival::SecondListed
        } else {
            FirstArrival::Indeterminate
        };
        Self { pair: sensors[0].pair(), sensors, tdoa, first_arrival }
    }

    /// The physical sensor that fired first, if any.
    pub fn earliest_channel(&self) -> Option<Channel> {
        match self.first_arrival {
            FirstArrival::FirstListed => Some(self.sensors[0]),
            FirstArrival::SecondListed => Some(self.sensors[1]),
            FirstArrival::Indeterminate => None,
        }
    }

    /// Same measurement with the listing order swapped.
    pub fn swapped(&self) -> Self {
        Self {
            pair: self.pair,
            sensors: [self.sensors[1], self.sensors[0]],
            tdoa: -self.tdoa,
            first_arrival: self.first_arrival.flipped(),
        }
    }

    /// Checks `|tdoa| <= separation / speed`.
    pub fn is_feasible(&self, separation_cm: T, speed_cm_per_s: T) -> bool {
        self.tdoa.abs() <= separation_cm / speed_cm_per_s
    }
}

/// Thresholds, debounce and framing for a device detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Amplitude that declares a tap present in a chunk.
    pub detect_threshold: i32,
    /// Lower amplitude used to place the onset once a tap is declared.
    pub onset_threshold: i32,
    /// Chunks ignored after each emitted observation.
    pub debounce_chunks: usize,
    pub chunk_size: usize,
    pub sample_rate: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            detect_threshold: 1000,
            onset_threshold: 500,
            debounce_chunks: 5,
            chunk_size: 8192,
            sample_rate: 192_000,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        let in_range = |v: i32| v > 0 && v <= i16::MAX as i32;
        if !in_range(self.detect_threshold) || !in_range(self.onset_threshold) {
            return Err(SignalError::Config(format!(
                "thresholds must lie in (0, 32767], got detect={} onset={}",
                self.detect_threshold, self.onset_threshold
            )));
        }
        if self.onset_threshold > self.detect_threshold {
            return Err(SignalError::Config(format!(
                "onset threshold {} exceeds detect threshold {}",
                self.onset_threshold, self.detect_threshold
            )));
        }
        if self.chunk_size == 0 {
            return Err(SignalError::Config("chunk size must be positive".into()));
        }
        if !SUPPORTED_SAMPLE_RATES.contains(&self.sample_rate) {
            return Err(SignalError::Config(format!(
                "unsupported sample rate {} Hz (expected one of {:?})",
                self.sample_rate, SUPPORTED_SAMPLE_RATES
            )));
        }
        Ok(())
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate as f64
    }

    pub fn chunk_duration(&self) -> f64 {
        self.chunk_size as f64 / self.sample_rate as f64
    }
}
