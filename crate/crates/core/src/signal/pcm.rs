//! Raw PCM files: interleaved signed 16-bit little-endian, two channels,
//! laid out `slot0[0], slot1[0], slot0[1], slot1[1], ...`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Channel, ChunkPair, Pair, SampleChunk, SignalError};

const FRAME_BYTES: usize = 4;

/// Which sensor is wired to each stereo slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelMap {
    pub slots: [Channel; 2],
}

impl ChannelMap {
    pub fn new(slot0: Channel, slot1: Channel) -> Result<Self, SignalError> {
        if slot0 == slot1 {
            return Err(SignalError::Usage(format!("channel {slot0} mapped to both slots")));
        }
        if slot0.pair() != slot1.pair() {
            return Err(SignalError::CrossDevice(slot0, slot1));
        }
        Ok(Self { slots: [slot0, slot1] })
    }

    pub fn for_pair(pair: Pair) -> Self {
        Self { slots: pair.channels() }
    }

    pub fn pair(&self) -> Pair {
        self.slots[0].pair()
    }
}

/// A whole device recording held in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceStream {
    pub map: ChannelMap,
    pub sample_rate: u32,
    pub samples: [Vec<i16>; 2],
}

impl DeviceStream {
    pub fn new(map: ChannelMap, sample_rate: u32, len: usize) -> Self {
        Self { map, sample_rate, samples: [vec![0; len], vec![0; len]] }
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Splits the recording into chunks; the last one may be short.
    pub fn chunks(&self, chunk_size: usize) -> impl Iterator<Item = ChunkPair> + '_ {
        assert!(chunk_size > 0, "chunk size must be positive");
        self.samples[0]
            .chunks(chunk_size)
            .zip(self.samples[1].chunks(chunk_size))
            .enumerate()
            .map(move |(i, (a, b))| self.chunk_pair(i as u64, a.to_vec(), b.to_vec()))
    }

    fn chunk_pair(&self, chunk_index: u64, a: Vec<i16>, b: Vec<i16>) -> ChunkPair {
        let mk = |channel, samples| SampleChunk { channel, samples, chunk_index, sample_rate: self.sample_rate };
        ChunkPair { first: mk(self.map.slots[0], a), second: mk(self.map.slots[1], b) }
    }
}

/// Iterator of [`ChunkPair`]s decoded from a PCM byte source.
pub struct PcmChunks<R> {
    reader: R,
    map: ChannelMap,
    sample_rate: u32,
    next_index: u64,
    offset: u64,
    done: bool,
    buf: Vec<u8>,
}

impl<R: Read> PcmChunks<R> {
    pub fn new(reader: R, map: ChannelMap, sample_rate: u32, chunk_size: usize) -> Self {
        assert!(chunk_size > 0, "chunk size must be positive");
        Self { reader, map, sample_rate, next_index: 0, offset: 0, done: false, buf: vec![0; chunk_size * FRAME_BYTES] }
    }

    fn fill(&mut self) -> std::io::Result<usize> {
        let mut n = 0;
        while n < self.buf.len() {
            match self.reader.read(&mut self.buf[n..]) {
                Ok(0) => break,
                Ok(k) => n += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(n)
    }
}

impl<R: Read> Iterator for PcmChunks<R> {
    type Item = Result<ChunkPair, SignalError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let n = match self.fill() {
            Ok(n) => n,
            Err(e) => {
                self.done = true;
                return Some(Err(e.into()));
            }
        };
        if n == 0 {
            self.done = true;
            return None;
        }
        if n % FRAME_BYTES != 0 {
            self.done = true;
            let whole = n - n % FRAME_BYTES;
            let reason =
                if n % 2 == 1 { "odd byte count" } else { "truncated frame: sample for slot 0 without slot 1" };
            return Some(Err(SignalError::Format { offset: self.offset + whole as u64, reason: reason.into() }));
        }
        if n < self.buf.len() {
            self.done = true;
        }
        let frames = n / FRAME_BYTES;
        let mut a = Vec::with_capacity(frames);
        let mut b = Vec::with_capacity(frames);
        for frame in self.buf[..n].chunks_exact(FRAME_BYTES) {
            a.push(i16::from_le_bytes([frame[0], frame[1]]));
            b.push(i16::from_le_bytes([frame[2], frame[3]]));
        }
        let chunk_index = self.next_index;
        self.next_index += 1;
        self.offset += n as u64;
        let mk = |channel, samples| SampleChunk { channel, samples, chunk_index, sample_rate: self.sample_rate };
        Some(Ok(ChunkPair { first: mk(self.map.slots[0], a), second: mk(self.map.slots[1], b) }))
    }
}

/// Opens a raw PCM recording of one device.
pub fn ingest_pcm_file(
    path: impl AsRef<Path>,
    map: ChannelMap,
    sample_rate: u32,
    chunk_size: usize,
) -> Result<PcmChunks<BufReader<File>>, SignalError> {
    let file = File::open(path)?;
    Ok(PcmChunks::new(BufReader::new(file), map, sample_rate, chunk_size))
}

/// Interleaves chunks back into the raw PCM layout.
pub fn write_pcm<'a, W, I>(out: W, chunks: I) -> Result<(), SignalError>
where
    W: Write,
    I: IntoIterator<Item = &'a ChunkPair>,
{
    let mut out = BufWriter::new(out);
    for chunk in chunks {
        chunk.check()?;
        for (a, b) in chunk.first.samples.iter().zip(&chunk.second.samples) {
            out.write_all(&a.to_le_bytes())?;
            out.write_all(&b.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn export_pcm<'a, I>(chunks: I, path: impl AsRef<Path>) -> Result<(), SignalError>
where
    I: IntoIterator<Item = &'a ChunkPair>,
{
    write_pcm(File::create(path)?, chunks)
}
