use std::path::Path;

use rayon::prelude::*;

use super::shard::ShardWriter;
use super::{record_for_node, simulate_sample, GenerationSpec, Manifest, SampleRecord};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// File names written next to the shards.
pub const MANIFEST_FILE: &str = "dataset.manifest";
pub const SPEC_FILE: &str = "generation.cfg";

const RENOISE_TAG: u64 = 0x5245_4e4f_4953_4500; // "RENOISE"

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    /// Worker threads; 0 uses the global rayon pool size.
    pub workers: usize,
    /// Records per shard file. Shard boundaries depend only on this value,
    /// never on `workers`.
    pub shard_size: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            workers: 0,
            shard_size: 4096,
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `records` (already in order) as consecutive shards.
fn write_shards<I>(
    out_dir: &Path,
    digest: [u8; 32],
    shard_size: u64,
    chunks: I,
) -> Result<Manifest>
where
    I: IntoIterator<Item = Result<Vec<SampleRecord>>>,
{
    let mut manifest = Manifest::new(out_dir);
    for (index, chunk) in chunks.into_iter().enumerate() {
        let chunk = chunk?;
        debug_assert!(chunk.len() as u64 <= shard_size);
        let path = out_dir.join(format!("shard-{index:05}.bin"));
        let mut writer = ShardWriter::create(&path, digest)?;
        for rec in &chunk {
            writer.write(rec)?;
        }
        let (path, count) = writer.finish()?;
        manifest.push_shard(&path, u64::from(count))?;
    }
    Ok(manifest)
}

fn save_dataset(out_dir: &Path, spec: &GenerationSpec, manifest: &Manifest) -> Result<()> {
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    let cfg = out_dir.join(SPEC_FILE);
    std::fs::write(&cfg, spec.to_config_text()).map_err(|e| Error::io(&cfg, e))
}

/// Generates `spec.n_samples` records into `out_dir`, writing the shards,
/// `dataset.manifest` and `generation.cfg`.
///
/// Output is bitwise identical for a given spec and shard size, whatever the
/// number of workers.
pub fn generate(spec: &GenerationSpec, out_dir: &Path, opts: &GenerateOptions) -> Result<Manifest> {
    spec.validate()?;
    if opts.shard_size == 0 {
        return Err(Error::InvalidParameter("shard size must be positive".into()));
    }
    create_dir(out_dir)?;
    let pool = pool(opts.workers)?;
    let digest = spec.digest();
    let n = spec.n_samples;
    let chunks = (0..n.div_ceil(opts.shard_size)).map(|c| {
        let start = c * opts.shard_size;
        let end = (start + opts.shard_size).min(n);
        Ok(pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|id| simulate_sample(spec, id))
                .collect::<Vec<_>>()
        }))
    });
    let manifest = write_shards(out_dir, digest, opts.shard_size, chunks)?;
    save_dataset(out_dir, spec, &manifest)?;
    Ok(manifest)
}

/// Spec of a dataset re-acquired with `n_measurements` shots per point; the
/// shot-noise seed is a fresh child of the original one.
pub fn renoised_spec(spec: &GenerationSpec, n_measurements: u32) -> Result<GenerationSpec> {
    if n_measurements == 0 {
        return Err(Error::InvalidParameter(
            "n_measurements must be at least 1".into(),
        ));
    }
    let mut out = spec.clone();
    out.noise.n_measurements = n_measurements;
    out.noise.seed = derive_seed(spec.noise.seed, RENOISE_TAG ^ u64::from(n_measurements));
    Ok(out)
}

/// Re-acquires every sample of `manifest` with a new shot-noise level. Nodes
/// and sample ids are kept; traces are recomputed from the ground truth.
pub fn renoise(
    manifest: &Manifest,
    spec: &GenerationSpec,
    n_measurements: u32,
    out_dir: &Path,
    opts: &GenerateOptions,
) -> Result<(GenerationSpec, Manifest)> {
    let new_spec = renoised_spec(spec, n_measurements)?;
    create_dir(out_dir)?;
    let pool = pool(opts.workers)?;
    let source_digest = spec.digest();
    let chunks = manifest.entries.iter().map(|entry| {
        let records = manifest.read_entry(entry, Some(&source_digest))?;
        Ok(pool.install(|| {
            records
                .into_par_iter()
                .map(|r| record_for_node(&new_spec, r.sample_id, r.nuclei, &new_spec.noise))
                .collect::<Vec<_>>()
        }))
    });
    let shard_size = manifest.entries.iter().map(|e| e.count).max().unwrap_or(1);
    let out = write_shards(out_dir, new_spec.digest(), shard_size, chunks)?;
    save_dataset(out_dir, &new_spec, &out)?;
    Ok((new_spec, out))
}

/// Loads `generation.cfg` and `dataset.manifest` from a dataset directory.
pub fn open_dataset(dir: &Path) -> Result<(GenerationSpec, Manifest)> {
    let cfg = dir.join(SPEC_FILE);
    let text = std::fs::read_to_string(&cfg).map_err(|e| Error::io(&cfg, e))?;
    let spec = GenerationSpec::from_config_text(&text)?;
    let manifest = Manifest::load(dir.join(MANIFEST_FILE))?;
    Ok((spec, manifest))
}
