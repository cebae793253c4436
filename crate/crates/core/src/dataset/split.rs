use std::path::Path;

use rand::seq::SliceRandom;

use super::generate::{MANIFEST_FILE, SPEC_FILE};
use super::shard::ShardWriter;
use super::{GenerationSpec, Manifest};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Channel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|&x| !(x >= 0.0)) || ((r.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split ratios must be non-negative and sum to 1, got {r:?}"
            )));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` samples; remainder ties go to
/// the earlier split (train, then validation).
pub fn split_counts(total: u64, ratios: &SplitRatios) -> Result<[u64; 3]> {
    ratios.validate()?;
    let quotas = ratios.as_array().map(|r| r * total as f64);
    let mut counts = quotas.map(|q| q.floor() as u64);
    let assigned: u64 = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone)]
pub struct SplitManifests {
    pub train: Manifest,
    pub val: Manifest,
    pub test: Manifest,
}

const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

/// Partitions a dataset into `out_dir/{train,val,test}`. The permutation is
/// drawn from the split stream of `seed`; records keep their manifest order
/// inside each part.
pub fn split(
    manifest: &Manifest,
    spec: &GenerationSpec,
    ratios: &SplitRatios,
    seed: u64,
    out_dir: &Path,
    shard_size: u64,
) -> Result<SplitManifests> {
    let total = manifest.total();
    if total == 0 {
        return Err(Error::EmptyDataset("nothing to split".into()));
    }
    if shard_size == 0 {
        return Err(Error::InvalidParameter("shard size must be positive".into()));
    }
    let counts = split_counts(total, ratios)?;
    let mut positions: Vec<u64> = (0..total).collect();
    positions.shuffle(&mut keyed_rng(seed, 0, Channel::Split, 0));
    let mut label = vec![0u8; total as usize];
    let mut k = 0usize;
    for (part, &count) in counts.iter().enumerate() {
        for &pos in &positions[k..k + count as usize] {
            label[pos as usize] = part as u8;
        }
        k += count as usize;
    }

    let digest = spec.digest();
    let dirs = SPLIT_NAMES.map(|name| out_dir.join(name));
    for d in &dirs {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut manifests = dirs.clone().map(Manifest::new);
    let mut writers: [Option<ShardWriter>; 3] = [None, None, None];
    let mut shard_index = [0usize; 3];

    let close = |part: usize, w: ShardWriter, manifests: &mut [Manifest; 3]| -> Result<()> {
        let (path, count) = w.finish()?;
        manifests[part].push_shard(&path, u64::from(count))
    };

    let mut pos = 0usize;
    manifest.for_each_shard(Some(&digest), |records| {
        for rec in records {
            let part = usize::from(label[pos]);
            pos += 1;
            if writers[part].is_none() {
                let path = dirs[part].join(format!("shard-{:05}.bin", shard_index[part]));
                shard_index[part] += 1;
                writers[part] = Some(ShardWriter::create(path, digest)?);
            }
            let w = writers[part].as_mut().expect("just opened");
            w.write(&rec)?;
            if u64::from(w.count()) == shard_size {
                close(part, writers[part].take().expect("open"), &mut manifests)?;
            }
        }
        Ok(())
    })?;
    for part in 0..3 {
        if let Some(w) = writers[part].take() {
            close(part, w, &mut manifests)?;
        }
    }
    for (part, m) in manifests.iter().enumerate() {
        m.save(dirs[part].join(MANIFEST_FILE))?;
        let cfg = dirs[part].join(SPEC_FILE);
        std::fs::write(&cfg, spec.to_config_text()).map_err(|e| Error::io(&cfg, e))?;
    }
    let [train, val, test] = manifests;
    Ok(SplitManifests { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, FieldRegime, GenerateOptions};
    use std::collections::HashSet;

    #[test]
    fn counts_follow_largest_remainder() {
        let r = SplitRatios::default();
        assert_eq!(split_counts(100, &r).unwrap(), [70, 15, 15]);
        assert_eq!(split_counts(1, &r).unwrap(), [1, 0, 0]);
        assert_eq!(split_counts(10, &r).unwrap(), [7, 2, 1]);
        for n in 0..500 {
            assert_eq!(split_counts(n, &r).unwrap().iter().sum::<u64>(), n);
        }
        let bad = SplitRatios {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(split_counts(10, &bad).is_err());
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let spec = GenerationSpec::new(FieldRegime::High, 20, 1);
        let src = tempfile::tempdir().unwrap();
        let m = generate(&spec, src.path(), &GenerateOptions { workers: 2, shard_size: 6 }).unwrap();

        let ids = |out: &SplitManifests| -> [Vec<u64>; 3] {
            [&out.train, &out.val, &out.test].map(|m| {
                m.read_all(Some(&spec.digest()))
                    .unwrap()
                    .iter()
                    .map(|r| r.sample_id)
                    .collect()
            })
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = ids(&split(&m, &spec, &SplitRatios::default(), 5, a.path(), 4).unwrap());
        let sb = ids(&split(&m, &spec, &SplitRatios::default(), 5, b.path(), 4).unwrap());
        assert_eq!(sa, sb);
        assert_eq!(sa.iter().map(Vec::len).collect::<Vec<_>>(), vec![14, 3, 3]);
        let all: HashSet<u64> = sa.iter().flatten().copied().collect();
        assert_eq!(all.len(), 20);
        assert_eq!(all, (0..20).collect());

        let c = tempfile::tempdir().unwrap();
        let sc = ids(&split(&m, &spec, &SplitRatios::default(), 6, c.path(), 4).unwrap());
        assert_ne!(sa, sc);
    }

    #[test]
    fn empty_dataset_rejected() {
        let spec = GenerationSpec::new(FieldRegime::High, 0, 1);
        let m = Manifest::new("/nonexistent");
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            split(&m, &spec, &SplitRatios::default(), 1, dir.path(), 10),
            Err(Error::EmptyDataset(_))
        ));
    }
}
