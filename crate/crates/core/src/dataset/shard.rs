//! Binary shard container.
//!
//! Little-endian layout:
//!
//! ```text
//! header:  "SALI" | u32 version (=1) | u32 record count | 32-byte spec digest
//! record:  u64 sample_id | u8 n | n x (f64 a_par_hz, f64 a_perp_hz)
//!          | 1000 x f32 trace (slot 0) | 1000 x f32 trace (slot 1)
//! ```

use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{SampleRecord, TRACE_LEN};
use crate::error::{Error, Result};
use crate::signal::Nucleus;

pub const SHARD_MAGIC: [u8; 4] = *b"SALI";
pub const SHARD_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub version: u32,
    pub count: u32,
    pub spec_digest: [u8; 32],
}

/// Streaming writer; the record count is patched into the header on
/// [`ShardWriter::finish`].
pub struct ShardWriter {
    path: PathBuf,
    out: BufWriter<File>,
    count: u32,
}

impl ShardWriter {
    pub fn create(path: impl AsRef<Path>, spec_digest: [u8; 32]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(&SHARD_MAGIC);
        header.extend_from_slice(&SHARD_VERSION.to_le_bytes());
        header.extend_from_slice(&0u32.to_le_bytes());
        header.extend_from_slice(&spec_digest);
        out.write_all(&header).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            out,
            count: 0,
        })
    }

    pub fn write(&mut self, record: &SampleRecord) -> Result<()> {
        let n = u8::try_from(record.nuclei.len()).map_err(|_| {
            Error::InvalidParameter(format!(
                "sample {} has {} nuclei; at most 255 fit a record",
                record.sample_id,
                record.nuclei.len()
            ))
        })?;
        for t in &record.traces {
            if t.len() != TRACE_LEN {
                return Err(Error::LengthMismatch {
                    expected: TRACE_LEN,
                    actual: t.len(),
                });
            }
        }
        let mut buf = Vec::with_capacity(9 + 16 * usize::from(n) + 8 * TRACE_LEN);
        buf.extend_from_slice(&record.sample_id.to_le_bytes());
        buf.push(n);
        for nuc in &record.nuclei {
            buf.extend_from_slice(&nuc.a_par.to_le_bytes());
            buf.extend_from_slice(&nuc.a_perp.to_le_bytes());
        }
        for t in &record.traces {
            for v in t {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        self.out.write_all(&buf).map_err(|e| Error::io(&self.path, e))?;
        self.count = self.count.checked_add(1).ok_or_else(|| {
            Error::InvalidParameter("shard record count overflows u32".into())
        })?;
        Ok(())
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn finish(mut self) -> Result<(PathBuf, u32)> {
        let path = self.path.clone();
        let io = |e| Error::io(&path, e);
        self.out.seek(SeekFrom::Start(8)).map_err(io)?;
        self.out.write_all(&self.count.to_le_bytes()).map_err(io)?;
        self.out.flush().map_err(io)?;
        Ok((self.path, self.count))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format(self.path, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

/// Parses a shard from memory. `path` is only used for error messages.
pub fn parse_shard(bytes: &[u8], path: &Path) -> Result<(ShardHeader, Vec<SampleRecord>)> {
    let mut cur = Cursor { bytes, pos: 0, path };
    let magic: [u8; 4] = cur.array()?;
    if magic != SHARD_MAGIC {
        return Err(Error::format(path, "bad magic, not a shard file"));
    }
    let version = cur.u32()?;
    if version != SHARD_VERSION {
        return Err(Error::format(path, format!("unsupported shard version {version}")));
    }
    let count = cur.u32()?;
    let spec_digest: [u8; 32] = cur.array()?;
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let sample_id = cur.u64()?;
        let n = cur.take(1)?[0];
        let nuclei = (0..n)
            .map(|_| {
                Ok(Nucleus {
                    a_par: cur.f64()?,
                    a_perp: cur.f64()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut trace = || -> Result<Vec<f32>> {
            let raw = cur.take(4 * TRACE_LEN)?;
            Ok(raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect())
        };
        let traces = [trace()?, trace()?];
        records.push(SampleRecord {
            sample_id,
            nuclei,
            traces,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after {count} records", bytes.len() - cur.pos),
        ));
    }
    Ok((
        ShardHeader {
            version,
            count,
            spec_digest,
        },
        records,
    ))
}

pub fn read_shard(path: impl AsRef<Path>) -> Result<(ShardHeader, Vec<SampleRecord>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_shard(&bytes, path)
}
