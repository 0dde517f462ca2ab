use super::{FirstArrival, OnsetEvent, SampleChunk, SignalError, TdoaObservation};

#[inline]
fn magnitude(sample: i16) -> i32 {
    (sample as i32).abs()
}

/// Smallest in-chunk index whose magnitude reaches `threshold`.
pub fn detect_onset(chunk: &SampleChunk, threshold: i32) -> Option<usize> {
    chunk.samples.iter().position(|&s| magnitude(s) >= threshold)
}

/// Locates the onset of a tap already declared at `coarse_index`: the first
/// sample at or before it that reaches the lower `onset_threshold`.
pub fn refine_onset(chunk: &SampleChunk, coarse_index: usize, onset_threshold: i32) -> Result<usize, SignalError> {
    let end = coarse_index.min(chunk.samples.len().saturating_sub(1));
    chunk.samples[..=end].iter().position(|&s| magnitude(s) >= onset_threshold).ok_or_else(|| {
        SignalError::Inconsistent(format!(
            "no sample of chunk {} on {} reaches onset threshold {} before index {}",
            chunk.chunk_index, chunk.channel, onset_threshold, coarse_index
        ))
    })
}

/// Pairs the onsets of the two channels of one device.
///
/// `tdoa = b - a` in seconds; the magnitude is exactly `|Δsample| / rate`.
pub fn pair_tdoa(a: &OnsetEvent, b: &OnsetEvent) -> Result<TdoaObservation<f64>, SignalError> {
    if a.channel == b.channel {
        return Err(SignalError::Usage(format!("both onsets come from channel {}", a.channel)));
    }
    if a.channel.pair() != b.channel.pair() {
        return Err(SignalError::CrossDevice(a.channel, b.channel));
    }
    if a.sample_rate != b.sample_rate {
        return Err(SignalError::Usage(format!(
            "onsets sampled at different rates ({} vs {} Hz)",
            a.sample_rate, b.sample_rate
        )));
    }
    let lag = b.global_sample_index as i64 - a.global_sample_index as i64;
    let tdoa = lag as f64 / a.sample_rate as f64;
    let first_arrival = match lag {
        l if l > 0 => FirstArrival::FirstListed,
        l if l < 0 => FirstArrival::SecondListed,
        _ => FirstArrival::Indeterminate,
    };
    Ok(TdoaObservation { pair: a.channel.pair(), sensors: [a.channel, b.channel], tdoa, first_arrival })
}
