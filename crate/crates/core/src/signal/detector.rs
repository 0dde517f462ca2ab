use std::io::Write;

use super::{
    detect_onset, pair_tdoa, refine_onset, ChunkPair, DetectorConfig, OnsetEvent, Pair, SignalError, TdoaObservation,
};
use crate::numfmt::sig9;

/// One tap seen on both channels of a device.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub pair: Pair,
    /// Ordinal of this detection within its device stream.
    pub tap_id: u64,
    pub observation: TdoaObservation<f64>,
    /// Onset sample index per stereo slot, on this device's clock.
    pub sample_index: [u64; 2],
    /// Chunk during which the observation was emitted.
    pub chunk_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    /// One channel crossed the detect threshold; waiting at most one more
    /// chunk for the other.
    Pending {
        slot: usize,
        onset: u64,
        chunk_index: u64,
    },
    Debounce {
        remaining: usize,
    },
}

/// Sequential tap detector for one stereo device.
///
/// A tap counts when both channels cross the detect threshold in the same
/// chunk or in adjacent chunks. After each emission the next
/// `debounce_chunks` chunks are skipped.
#[derive(Debug, Clone)]
pub struct DeviceDetector {
    config: DetectorConfig,
    pair: Option<Pair>,
    state: State,
    next_chunk: Option<u64>,
    short_chunk_seen: bool,
    previous: Option<ChunkPair>,
    emitted: u64,
}

impl DeviceDetector {
    pub fn new(config: DetectorConfig) -> Result<Self, SignalError> {
        config.validate()?;
        Ok(Self {
            config,
            pair: None,
            state: State::Idle,
            next_chunk: None,
            short_chunk_seen: false,
            previous: None,
            emitted: 0,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Feeds the next chunk of the device stream.
    pub fn push(&mut self, chunk: ChunkPair) -> Result<Option<Detection>, SignalError> {
        self.check_chunk(&chunk)?;
        let detection = self.step(&chunk)?;
        self.next_chunk = Some(chunk.chunk_index() + 1);
        self.previous = Some(chunk);
        Ok(detection)
    }

    fn check_chunk(&mut self, chunk: &ChunkPair) -> Result<(), SignalError> {
        chunk.check()?;
        let pair = chunk.pair();
        match self.pair {
            None => self.pair = Some(pair),
            Some(p) if p != pair => return Err(SignalError::CrossDevice(p.channels()[0], chunk.first.channel)),
            _ => {}
        }
        if let Some(expected) = self.next_chunk {
            if chunk.chunk_index() != expected {
                return Err(SignalError::OutOfOrder { expected, got: chunk.chunk_index() });
            }
        }
        if chunk.sample_rate() != self.config.sample_rate {
            return Err(SignalError::Usage(format!(
                "chunk sampled at {} Hz but detector configured for {} Hz",
                chunk.sample_rate(),
                self.config.sample_rate
            )));
        }
        let len = chunk.first.samples.len();
        if len > self.config.chunk_size {
            return Err(SignalError::Inconsistent(format!(
                "chunk {} holds {} samples, more than the configured {}",
                chunk.chunk_index(),
                len,
                self.config.chunk_size
            )));
        }
        if self.short_chunk_seen {
            return Err(SignalError::Inconsistent("stream continues after a short final chunk".into()));
        }
        if len < self.config.chunk_size {
            self.short_chunk_seen = true;
        }
        Ok(())
    }

    fn step(&mut self, chunk: &ChunkPair) -> Result<Option<Detection>, SignalError> {
        let index = chunk.chunk_index();
        match self.state {
            State::Debounce { remaining } => {
                let remaining = remaining.saturating_sub(1);
                self.state = if remaining == 0 { State::Idle } else { State::Debounce { remaining } };
                Ok(None)
            }
            State::Pending { slot, onset, chunk_index } if chunk_index + 1 == index => {
                let other = 1 - slot;
                match detect_onset(chunk.slot(other), self.config.detect_threshold) {
                    Some(coarse) => {
                        let other_onset = self.locate(chunk, other, coarse)?;
                        let mut onsets = [0u64; 2];
                        onsets[slot] = onset;
                        onsets[other] = other_onset;
                        self.emit(chunk, onsets).map(Some)
                    }
                    None => {
                        // Window lapsed: drop the one-sided tap and treat this
                        // chunk as fresh.
                        self.state = State::Idle;
                        self.scan_idle(chunk)
                    }
                }
            }
            State::Pending { .. } | State::Idle => {
                self.state = State::Idle;
                self.scan_idle(chunk)
            }
        }
    }

    fn scan_idle(&mut self, chunk: &ChunkPair) -> Result<Option<Detection>, SignalError> {
        let threshold = self.config.detect_threshold;
        let hits = [detect_onset(&chunk.first, threshold), detect_onset(&chunk.second, threshold)];
        match hits {
            [Some(a), Some(b)] => {
                let onsets = [self.locate(chunk, 0, a)?, self.locate(chunk, 1, b)?];
                self.emit(chunk, onsets).map(Some)
            }
            [Some(coarse), None] | [None, Some(coarse)] => {
                let slot = if hits[0].is_some() { 0 } else { 1 };
                let onset = self.locate(chunk, slot, coarse)?;
                self.state = State::Pending { slot, onset, chunk_index: chunk.chunk_index() };
                Ok(None)
            }
            [None, None] => Ok(None),
        }
    }

    /// Global onset index for a tap declared at `coarse` in `slot`. When the
    /// onset run starts at the chunk boundary it is traced back into the
    /// previous chunk of the same channel.
    fn locate(&self, chunk: &ChunkPair, slot: usize, coarse: usize) -> Result<u64, SignalError> {
        let size = self.config.chunk_size as u64;
        let threshold = self.config.onset_threshold;
        let fine = refine_onset(chunk.slot(slot), coarse, threshold)?;
        let index = chunk.chunk_index();
        if fine == 0 && index > 0 {
            if let Some(prev) = self.previous.as_ref().filter(|p| p.chunk_index() + 1 == index) {
                let samples = &prev.slot(slot).samples;
                let run = samples.iter().rev().take_while(|&&s| (s as i32).abs() >= threshold).count();
                return Ok((index - 1) * size + (samples.len() - run) as u64);
            }
        }
        Ok(index * size + fine as u64)
    }

    fn emit(&mut self, chunk: &ChunkPair, onsets: [u64; 2]) -> Result<Detection, SignalError> {
        let rate = chunk.sample_rate();
        let a = OnsetEvent::new(chunk.first.channel, onsets[0], rate);
        let b = OnsetEvent::new(chunk.second.channel, onsets[1], rate);
        let observation = pair_tdoa(&a, &b)?;
        let detection = Detection {
            pair: chunk.pair(),
            tap_id: self.emitted,
            observation,
            sample_index: onsets,
            chunk_index: chunk.chunk_index(),
        };
        self.emitted += 1;
        self.state = if self.config.debounce_chunks == 0 {
            State::Idle
        } else {
            State::Debounce { remaining: self.config.debounce_chunks }
        };
        Ok(detection)
    }

    /// Runs over a fallible chunk source, stopping at the first error.
    pub fn feed<I>(&mut self, chunks: I) -> Result<Vec<Detection>, SignalError>
    where
        I: IntoIterator<Item = Result<ChunkPair, SignalError>>,
    {
        let mut out = Vec::new();
        for chunk in chunks {
            if let Some(d) = self.push(chunk?)? {
                out.push(d);
            }
        }
        Ok(out)
    }
}

/// Runs a fresh [`DeviceDetector`] over one device stream.
pub fn run_detector<I>(chunks: I, config: DetectorConfig) -> Result<Vec<Detection>, SignalError>
where
    I: IntoIterator<Item = ChunkPair>,
{
    let mut detector = DeviceDetector::new(config)?;
    detector.feed(chunks.into_iter().map(Ok))
}

/// Writes detections as
/// `pair, tap_id, tdoa_seconds, first_arrival, left_sample_index, right_sample_index`.
///
/// For the top/bottom device the two index columns hold the top and bottom
/// (stereo slot 0 and 1) onsets.
pub fn write_observations_csv<W: Write>(out: W, detections: &[Detection]) -> Result<(), SignalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pair", "tap_id", "tdoa_seconds", "first_arrival", "left_sample_index", "right_sample_index"])?;
    for d in detections {
        let first = d
            .observation
            .earliest_channel()
            .map(|c| c.name().to_string())
            .unwrap_or_else(|| "indeterminate".to_string());
        w.write_record([
            d.pair.name().to_string(),
            d.tap_id.to_string(),
            sig9(d.observation.tdoa),
            first,
            d.sample_index[0].to_string(),
            d.sample_index[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
