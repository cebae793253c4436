//! Per-time-index standardization statistics, `(P - mean) / sqrt(var + eps)`,
//! computed on the training split only.

use std::path::Path;

use super::{Manifest, SampleRecord};
use crate::error::{Error, Result};

pub const NORMALIZATION_EPSILON: f64 = 0.001;

const STATS_MAGIC: [u8; 4] = *b"SNRM";
const STATS_VERSION: u32 = 1;

/// Mean and population variance at every time index of one sequence slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub epsilon: f64,
    pub count: u64,
    pub channels: [ChannelStats; 2],
}

/// Welford accumulator per index.
struct Accumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, values: &[f32]) -> Result<()> {
        if values.len() != self.mean.len() {
            return Err(Error::LengthMismatch {
                expected: self.mean.len(),
                actual: values.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(values) {
            let v = f64::from(v);
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
        Ok(())
    }

    fn finish(self) -> ChannelStats {
        let n = self.count as f64;
        ChannelStats {
            mean: self.mean,
            var: self.m2.into_iter().map(|s| (s / n).max(0.0)).collect(),
        }
    }
}

#[derive(Default)]
struct StatsBuilder {
    channels: Option<[Accumulator; 2]>,
}

impl StatsBuilder {
    fn push(&mut self, rec: &SampleRecord) -> Result<()> {
        let acc = self.channels.get_or_insert_with(|| {
            [
                Accumulator::new(rec.traces[0].len()),
                Accumulator::new(rec.traces[1].len()),
            ]
        });
        acc[0].push(&rec.traces[0])?;
        acc[1].push(&rec.traces[1])
    }

    fn finish(self) -> Result<NormalizationStats> {
        let [a0, a1] = self
            .channels
            .ok_or_else(|| Error::EmptyDataset("training split is empty".into()))?;
        Ok(NormalizationStats {
            epsilon: NORMALIZATION_EPSILON,
            count: a0.count,
            channels: [a0.finish(), a1.finish()],
        })
    }
}

/// Statistics over an in-memory set of records.
pub fn stats_from_records<'a, I>(records: I) -> Result<NormalizationStats>
where
    I: IntoIterator<Item = &'a SampleRecord>,
{
    let mut builder = StatsBuilder::default();
    for rec in records {
        builder.push(rec)?;
    }
    builder.finish()
}

/// Streams the training manifest shard by shard.
pub fn compute_normalization(
    training: &Manifest,
    spec_digest: Option<&[u8; 32]>,
) -> Result<NormalizationStats> {
    let mut builder = StatsBuilder::default();
    training.for_each_shard(spec_digest, |records| {
        records.iter().try_for_each(|r| builder.push(r))
    })?;
    builder.finish()
}

impl NormalizationStats {
    /// Standardizes one trace of sequence slot `slot`.
    pub fn normalize<T: Copy + Into<f64>>(&self, slot: usize, values: &[T]) -> Result<Vec<f64>> {
        let ch = &self.channels[slot];
        if values.len() != ch.mean.len() {
            return Err(Error::LengthMismatch {
                expected: ch.mean.len(),
                actual: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(ch.mean.iter().zip(&ch.var))
            .map(|(&v, (&m, &var))| (v.into() - m) / (var + self.epsilon).sqrt())
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let len = self.channels[0].mean.len();
        let mut out = Vec::with_capacity(28 + 32 * len);
        out.extend_from_slice(&STATS_MAGIC);
        out.extend_from_slice(&STATS_VERSION.to_le_bytes());
        out.extend_from_slice(&(len as u32).to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.epsilon.to_le_bytes());
        for ch in &self.channels {
            for v in ch.mean.iter().chain(&ch.var) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |msg: &str| Error::format(path, msg.to_string());
        if bytes.len() < 28 || bytes[0..4] != STATS_MAGIC {
            return Err(fail("bad magic, not a normalization blob"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != STATS_VERSION {
            return Err(fail(&format!("unsupported stats version {version}")));
        }
        let len = u32_at(8) as usize;
        if bytes.len() != 28 + 32 * len {
            return Err(fail("size does not match the declared trace length"));
        }
        let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let epsilon = f64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
        let mut floats = bytes[28..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = || floats.by_ref().take(len).collect::<Vec<f64>>();
        let c0 = ChannelStats {
            mean: take(),
            var: take(),
        };
        let c1 = ChannelStats {
            mean: take(),
            var: take(),
        };
        Ok(Self {
            epsilon,
            count,
            channels: [c0, c1],
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
