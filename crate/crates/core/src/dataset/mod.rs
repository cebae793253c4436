//! Synthetic dataset generation: sampling of quantum nodes, simulation of the
//! two CPMG traces per sample, the binary shard container, train/validation/
//! test splitting and normalization statistics.

mod generate;
mod manifest;
mod normalize;
mod shard;
mod split;

pub use generate::{
    generate, open_dataset, renoise, renoised_spec, GenerateOptions, MANIFEST_FILE, SPEC_FILE,
};
pub use manifest::{file_digest, Manifest, ManifestEntry};
pub use normalize::{
    compute_normalization, stats_from_records, ChannelStats, NormalizationStats,
    NORMALIZATION_EPSILON,
};
pub use shard::{parse_shard, read_shard, ShardHeader, ShardWriter, SHARD_MAGIC, SHARD_VERSION};
pub use split::{split, split_counts, SplitManifests, SplitRatios};

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, keyed_rng, Channel};
use crate::signal::{
    apply_decoherence, apply_shot_noise, survival_probability, AcquisitionNoise, Nucleus,
    PulseSequence, QuantumNode, SignalTrace, HIGH_FIELD_T, LOW_FIELD_T,
};

/// Samples per trace in the shard format.
pub const TRACE_LEN: usize = 1000;

/// Largest node the generator produces (the record stores `n` as one byte).
pub const MAX_NUCLEI: u8 = 20;

/// Default T2 in seconds.
pub const DEFAULT_T2: f64 = 200e-6;

/// Default measurements per point.
pub const DEFAULT_MEASUREMENTS: u32 = 1000;

const SHOT_NOISE_TAG: u64 = 0x5348_4f54; // "SHOT"

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldRegime {
    High,
    Low,
}

impl FieldRegime {
    pub fn b_z(self) -> f64 {
        match self {
            FieldRegime::High => HIGH_FIELD_T,
            FieldRegime::Low => LOW_FIELD_T,
        }
    }
}

impl std::str::FromStr for FieldRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(FieldRegime::High),
            "low" => Ok(FieldRegime::Low),
            other => Err(Error::InvalidParameter(format!(
                "field regime must be `high` or `low`, got `{other}`"
            ))),
        }
    }
}

/// Everything that determines a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSpec {
    pub b_z: f64,
    pub n_samples: u64,
    /// Inclusive nucleus-count range.
    pub n_range: (u8, u8),
    /// Inclusive `a_par` range in Hz.
    pub a_par_range: (f64, f64),
    /// Inclusive `a_perp` range in Hz.
    pub a_perp_range: (f64, f64),
    pub sequences: [PulseSequence; 2],
    pub noise: AcquisitionNoise,
    /// Seed of the node-sampling streams.
    pub seed: u64,
}

impl GenerationSpec {
    /// Default ranges and sequences for a field regime; the shot-noise seed is
    /// derived from `seed`.
    pub fn new(regime: FieldRegime, n_samples: u64, seed: u64) -> Self {
        Self::with_field(regime.b_z(), n_samples, seed)
    }

    pub fn with_field(b_z: f64, n_samples: u64, seed: u64) -> Self {
        Self {
            b_z,
            n_samples,
            n_range: (1, MAX_NUCLEI),
            a_par_range: (-100e3, 100e3),
            a_perp_range: (2e3, 102e3),
            sequences: [PulseSequence::cpmg32(), PulseSequence::cpmg256()],
            noise: AcquisitionNoise {
                t2: DEFAULT_T2,
                n_measurements: DEFAULT_MEASUREMENTS,
                seed: derive_seed(seed, SHOT_NOISE_TAG),
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.b_z.is_finite() && self.b_z > 0.0) {
            return bad(format!("b_z must be positive, got {}", self.b_z));
        }
        let (lo, hi) = self.n_range;
        if lo < 1 || lo > hi || hi > MAX_NUCLEI {
            return bad(format!("nucleus range [{lo}, {hi}] outside [1, {MAX_NUCLEI}]"));
        }
        let (p0, p1) = self.a_par_range;
        if !(p0.is_finite() && p1.is_finite() && p0 <= p1) {
            return bad(format!("bad a_par range [{p0}, {p1}]"));
        }
        let (q0, q1) = self.a_perp_range;
        if !(q0.is_finite() && q1.is_finite() && 0.0 < q0 && q0 <= q1) {
            return bad(format!("bad a_perp range [{q0}, {q1}]"));
        }
        for seq in &self.sequences {
            if seq.n_points() != TRACE_LEN {
                return bad(format!(
                    "sequences must have {TRACE_LEN} points, got {}",
                    seq.n_points()
                ));
            }
        }
        if !(self.noise.t2 > 0.0) || self.noise.n_measurements == 0 {
            return bad("noise needs t2 > 0 and at least one measurement".into());
        }
        Ok(())
    }

    /// Canonical `key = value` text; floats are printed in round-trip form.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "b_z = {:?}", self.b_z);
        let _ = writeln!(s, "n_samples = {}", self.n_samples);
        let _ = writeln!(s, "n_min = {}", self.n_range.0);
        let _ = writeln!(s, "n_max = {}", self.n_range.1);
        let _ = writeln!(s, "a_par_min_hz = {:?}", self.a_par_range.0);
        let _ = writeln!(s, "a_par_max_hz = {:?}", self.a_par_range.1);
        let _ = writeln!(s, "a_perp_min_hz = {:?}", self.a_perp_range.0);
        let _ = writeln!(s, "a_perp_max_hz = {:?}", self.a_perp_range.1);
        for (i, seq) in self.sequences.iter().enumerate() {
            let _ = writeln!(s, "seq{i}_pulses = {}", seq.n_pulses());
            let _ = writeln!(s, "seq{i}_tau_min_s = {:?}", seq.tau_min());
            let _ = writeln!(s, "seq{i}_tau_max_s = {:?}", seq.tau_max());
            let _ = writeln!(s, "seq{i}_points = {}", seq.n_points());
        }
        let _ = writeln!(s, "t2_s = {:?}", self.noise.t2);
        let _ = writeln!(s, "n_measurements = {}", self.noise.n_measurements);
        let _ = writeln!(s, "noise_seed = {}", self.noise.seed);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        let kv = crate::config::KeyValues::parse(text)?;
        let seq = |i: usize| -> Result<PulseSequence> {
            PulseSequence::new(
                kv.require(&format!("seq{i}_pulses"))?,
                kv.require(&format!("seq{i}_tau_min_s"))?,
                kv.require(&format!("seq{i}_tau_max_s"))?,
                kv.require(&format!("seq{i}_points"))?,
            )
        };
        let spec = Self {
            b_z: kv.require("b_z")?,
            n_samples: kv.require("n_samples")?,
            n_range: (kv.require("n_min")?, kv.require("n_max")?),
            a_par_range: (kv.require("a_par_min_hz")?, kv.require("a_par_max_hz")?),
            a_perp_range: (kv.require("a_perp_min_hz")?, kv.require("a_perp_max_hz")?),
            sequences: [seq(0)?, seq(1)?],
            noise: AcquisitionNoise::new(
                kv.require("t2_s")?,
                kv.require("n_measurements")?,
                kv.require("noise_seed")?,
            )?,
            seed: kv.require("seed")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// SHA-256 of the canonical config text.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_config_text().as_bytes()).into()
    }
}

/// One stored sample: ground-truth nuclei and the two noisy traces.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: u64,
    pub nuclei: Vec<Nucleus>,
    /// Trace per sequence slot, stored at `f32` precision.
    pub traces: [Vec<f32>; 2],
}

impl SampleRecord {
    pub fn node(&self, b_z: f64) -> QuantumNode {
        QuantumNode {
            nuclei: self.nuclei.clone(),
            b_z,
        }
    }

    pub fn trace(&self, slot: usize, seq: &PulseSequence) -> Result<SignalTrace> {
        SignalTrace::new(
            *seq,
            self.traces[slot].iter().map(|&v| f64::from(v)).collect(),
        )
    }
}

/// Node of sample `sample_id`: `n` uniform on the count range, couplings
/// uniform on their ranges.
pub fn sample_node(spec: &GenerationSpec, sample_id: u64) -> QuantumNode {
    let mut rng = keyed_rng(spec.seed, sample_id, Channel::Node, 0);
    let n = rng.random_range(spec.n_range.0..=spec.n_range.1);
    let nuclei = (0..n)
        .map(|_| {
            let a_par = rng.random_range(spec.a_par_range.0..=spec.a_par_range.1);
            let a_perp = rng.random_range(spec.a_perp_range.0..=spec.a_perp_range.1);
            Nucleus { a_par, a_perp }
        })
        .collect();
    QuantumNode {
        nuclei,
        b_z: spec.b_z,
    }
}

/// Noiseless trace, then contrast decay, then shot noise.
pub fn acquire(
    node: &QuantumNode,
    seq: &PulseSequence,
    noise: &AcquisitionNoise,
    sample_id: u64,
    slot: u8,
) -> SignalTrace {
    let clean = survival_probability(node, seq);
    let damped = apply_decoherence(&clean, noise.t2).expect("validated t2");
    apply_shot_noise(&damped, noise, sample_id, slot)
}

/// Full record of one sample.
pub fn simulate_sample(spec: &GenerationSpec, sample_id: u64) -> SampleRecord {
    let node = sample_node(spec, sample_id);
    record_for_node(spec, sample_id, node.nuclei.clone(), &spec.noise)
}

pub(crate) fn record_for_node(
    spec: &GenerationSpec,
    sample_id: u64,
    nuclei: Vec<Nucleus>,
    noise: &AcquisitionNoise,
) -> SampleRecord {
    let node = QuantumNode {
        nuclei,
        b_z: spec.b_z,
    };
    let trace = |slot: usize| -> Vec<f32> {
        acquire(&node, &spec.sequences[slot], noise, sample_id, slot as u8)
            .values
            .iter()
            .map(|&v| v as f32)
            .collect()
    };
    let traces = [trace(0), trace(1)];
    SampleRecord {
        sample_id,
        nuclei: node.nuclei,
        traces,
    }
}
