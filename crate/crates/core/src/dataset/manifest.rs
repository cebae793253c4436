//! Manifest: one line per shard, `path<TAB>count<TAB>sha256-hex`, paths
//! relative to the manifest's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::shard::parse_shard;
use super::SampleRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub count: u64,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// Directory relative entry paths are resolved against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// SHA-256 of a byte string as lowercase hex.
pub fn file_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            entries: Vec::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    /// Adds a finished shard, hashing its bytes.
    pub fn push_shard(&mut self, path: &Path, count: u64) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let rel = path
            .strip_prefix(&self.root)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| path.to_path_buf());
        self.entries.push(ManifestEntry {
            path: rel,
            count,
            digest: file_digest(&bytes),
        });
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}\t{}", e.path.display(), e.count, e.digest);
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut manifest = Manifest::new(root);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [p, count, digest] = fields[..] else {
                return Err(Error::format(path, format!("line {}: expected 3 fields", i + 1)));
            };
            let count = count
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: bad count `{count}`", i + 1)))?;
            manifest.entries.push(ManifestEntry {
                path: PathBuf::from(p),
                count,
                digest: digest.to_string(),
            });
        }
        Ok(manifest)
    }

    /// Reads and verifies one shard: file digest against the manifest, record
    /// count against the entry and, when given, the header's spec digest.
    pub fn read_entry(
        &self,
        entry: &ManifestEntry,
        spec_digest: Option<&[u8; 32]>,
    ) -> Result<Vec<SampleRecord>> {
        let path = self.resolve(entry);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if file_digest(&bytes) != entry.digest {
            return Err(Error::DigestMismatch { path });
        }
        let (header, records) = parse_shard(&bytes, &path)?;
        if u64::from(header.count) != entry.count {
            return Err(Error::format(
                &path,
                format!("manifest lists {} records, shard holds {}", entry.count, header.count),
            ));
        }
        if let Some(d) = spec_digest {
            if &header.spec_digest != d {
                return Err(Error::format(&path, "shard was generated from a different spec"));
            }
        }
        Ok(records)
    }

    /// All records in manifest order.
    pub fn read_all(&self, spec_digest: Option<&[u8; 32]>) -> Result<Vec<SampleRecord>> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for e in &self.entries {
            out.extend(self.read_entry(e, spec_digest)?);
        }
        Ok(out)
    }

    /// Visits shards one at a time.
    pub fn for_each_shard<F>(&self, spec_digest: Option<&[u8; 32]>, mut f: F) -> Result<()>
    where
        F: FnMut(Vec<SampleRecord>) -> Result<()>,
    {
        for e in &self.entries {
            f(self.read_entry(e, spec_digest)?)?;
        }
        Ok(())
    }
}
