//! Command-line front end.
//!
//! Every subcommand resolves one [`RunConfig`] from built-in defaults, an
//! optional `--config` file and the flags (flags win), and writes it to
//! `<out>/<command>.run.cfg` before doing any work.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;

use crate::config::KeyValues;
use crate::dataset::{
    self, compute_normalization, generate, open_dataset, renoise, split, FieldRegime,
    GenerateOptions, GenerationSpec, Manifest, SampleRecord, SplitRatios, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, evaluate_record, robustness_sweep, selectivity_scan, write_audit_log,
    MetricsSummary, SampleEvaluation,
};
use crate::imaging::{
    image_file_name, parse_image_file_name, post_process, read_detections, render_target,
    write_detections, Detection, DetectionRow, GridSpec, HeatImage, PostProcessConfig,
};
use crate::oracle::{oracle_survival, ORACLE_MAX_NUCLEI};
use crate::peaks::{find_dips, resonance_candidates, DipThreshold};
use crate::rng::{derive_seed, keyed_rng, Channel};
use crate::signal::{
    apply_decoherence, survival_probability, Nucleus, PulseSequence, QuantumNode, SignalTrace,
};

/// Largest closed-form versus oracle deviation `oracle-check` accepts.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

const SPLIT_TAG: u64 = 0x5350_4c49_54; // "SPLIT"

/// Defaults for every key; `bz`, `manifest`, `images` and `detections` have
/// none.
const DEFAULTS: &[(&str, &str)] = &[
    ("field", "high"),
    ("samples", "1000"),
    ("seed", "0"),
    ("nm", "1000"),
    ("t2_us", "200"),
    ("threshold", "0.05"),
    ("min_area", "4"),
    ("out", "out"),
    ("workers", "0"),
    ("shard_size", "4096"),
    ("n_min", "1"),
    ("n_max", "20"),
    ("n", "1"),
    ("trials", "100"),
    ("slot", "0"),
    ("quantile", "0.05"),
    ("band_khz", "150"),
    ("levels", "1000,500,100,10"),
    ("offsets_khz", "7:7,3:3,1:1,0:0"),
    ("base_khz", "50:59.77"),
];

const OPTIONAL_KEYS: &[&str] = &["bz", "manifest", "images", "detections", "sample", "nuclei_khz"];

#[derive(Debug, Parser)]
#[command(name = "nvscope", version, about = "NV-center CPMG simulation and nuclear-spin detection toolkit")]
pub struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// `key = value` file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Field regime: `high` (0.056 T) or `low` (0.0056 T).
    #[arg(long, global = true)]
    field: Option<String>,
    /// Explicit field in tesla; overrides `--field`.
    #[arg(long, global = true)]
    bz: Option<f64>,
    #[arg(long, global = true)]
    samples: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Measurements per trace point.
    #[arg(long, global = true)]
    nm: Option<u32>,
    /// Decoherence time in microseconds.
    #[arg(long = "t2-us", global = true)]
    t2_us: Option<f64>,
    /// Heat-map region threshold.
    #[arg(long, global = true)]
    threshold: Option<f32>,
    #[arg(long = "min-area", global = true)]
    min_area: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset directory or its manifest file.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Directory of `.simg` heat maps.
    #[arg(long, global = true)]
    images: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset, split it and compute training statistics.
    Generate {
        #[arg(long = "shard-size")]
        shard_size: Option<u64>,
        #[arg(long = "n-min")]
        n_min: Option<u8>,
        #[arg(long = "n-max")]
        n_max: Option<u8>,
    },
    /// Render the true heat map of every sample in a dataset.
    RenderTargets,
    /// Decode heat maps into a detection table.
    Detect,
    /// Score detections against a dataset.
    Evaluate {
        /// Detection table; samples without rows count as empty.
        #[arg(long)]
        detections: Option<PathBuf>,
    },
    /// Compare the closed form with explicit propagation on random nodes.
    OracleCheck {
        /// Nuclei per node.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// List trace dips and the precession frequencies they imply.
    BaselinePeaks {
        #[arg(long)]
        sample: Option<u64>,
        /// Sequence slot of a stored sample (0: N=32, 1: N=256).
        #[arg(long)]
        slot: Option<usize>,
        /// Nuclei as `a_par:a_perp` kHz pairs separated by commas.
        #[arg(long = "nuclei-khz", allow_hyphen_values = true)]
        nuclei_khz: Option<String>,
        #[arg(long)]
        quantile: Option<f64>,
    },
    /// Re-acquire a dataset at several shot-noise levels and score each.
    Robustness {
        /// Comma-separated measurement counts.
        #[arg(long)]
        levels: Option<String>,
    },
    /// Count detections for close nucleus pairs.
    Selectivity {
        /// `d_par:d_perp` kHz offsets separated by commas.
        #[arg(long = "offsets-khz", allow_hyphen_values = true)]
        offsets_khz: Option<String>,
        #[arg(long = "base-khz", allow_hyphen_values = true)]
        base_khz: Option<String>,
    },
    /// Write traces as CSV.
    ExportTraces {
        #[arg(long)]
        sample: Option<u64>,
        #[arg(long = "nuclei-khz", allow_hyphen_values = true)]
        nuclei_khz: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::RenderTargets => "render-targets",
            Command::Detect => "detect",
            Command::Evaluate { .. } => "evaluate",
            Command::OracleCheck { .. } => "oracle-check",
            Command::BaselinePeaks { .. } => "baseline-peaks",
            Command::Robustness { .. } => "robustness",
            Command::Selectivity { .. } => "selectivity",
            Command::ExportTraces { .. } => "export-traces",
        }
    }

    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        match self {
            Command::Generate {
                shard_size,
                n_min,
                n_max,
            } => vec![
                ("shard_size", s(shard_size)),
                ("n_min", s(n_min)),
                ("n_max", s(n_max)),
            ],
            Command::Evaluate { detections } => {
                vec![("detections", detections.as_ref().map(|p| p.display().to_string()))]
            }
            Command::OracleCheck { n, trials } => vec![("n", s(n)), ("trials", s(trials))],
            Command::BaselinePeaks {
                sample,
                slot,
                nuclei_khz,
                quantile,
            } => vec![
                ("sample", s(sample)),
                ("slot", s(slot)),
                ("nuclei_khz", nuclei_khz.clone()),
                ("quantile", s(quantile)),
            ],
            Command::Robustness { levels } => vec![("levels", levels.clone())],
            Command::Selectivity {
                offsets_khz,
                base_khz,
            } => vec![
                ("offsets_khz", offsets_khz.clone()),
                ("base_khz", base_khz.clone()),
            ],
            Command::ExportTraces { sample, nuclei_khz } => {
                vec![("sample", s(sample)), ("nuclei_khz", nuclei_khz.clone())]
            }
            Command::RenderTargets | Command::Detect => Vec::new(),
        }
    }
}

/// Effective settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: KeyValues,
}

impl RunConfig {
    /// Defaults, then `file`, then the flags that were given.
    pub fn resolve(file: Option<&Path>, flags: &[(&str, Option<String>)]) -> Result<Self> {
        let mut values = KeyValues::default();
        for (k, v) in DEFAULTS {
            values.set(k, *v);
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (k, v) in KeyValues::parse(&text)?.iter() {
                // run logs carry the command they came from
                if k == "command" {
                    continue;
                }
                if !DEFAULTS.iter().any(|(d, _)| *d == k) && !OPTIONAL_KEYS.contains(&k) {
                    return Err(Error::Config(format!("unknown key `{k}` in {}", path.display())));
                }
                values.set(k, v);
            }
        }
        let given = |key: &str| flags.iter().any(|(k, v)| *k == key && v.is_some());
        if given("field") && !given("bz") {
            values.remove("bz");
        }
        for (k, v) in flags {
            if let Some(v) = v {
                values.set(k, v.clone());
            }
        }
        Ok(Self { values })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.values.require(key)
    }

    pub fn get_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values.get(key)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.raw(key).map(PathBuf::from)
    }

    fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("`--{key}` is required for this command")))
    }

    /// `bz` when set, otherwise the field regime's value.
    pub fn b_z(&self) -> Result<f64> {
        match self.get_opt::<f64>("bz")? {
            Some(b) => Ok(b),
            None => Ok(self.get::<FieldRegime>("field")?.b_z()),
        }
    }

    pub fn post_process(&self) -> Result<PostProcessConfig> {
        let cfg = PostProcessConfig {
            threshold: self.get("threshold")?,
            min_area: self.get("min_area")?,
            ..PostProcessConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self, command: &str) -> String {
        format!(
            "# nvscope {}\ncommand = {command}\n{}",
            env!("CARGO_PKG_VERSION"),
            self.values.to_text()
        )
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Config(e.to_string()))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let p = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
    let mut flags = vec![
        ("field", c.field.clone()),
        ("bz", c.bz.map(|v| v.to_string())),
        ("samples", c.samples.map(|v| v.to_string())),
        ("seed", c.seed.map(|v| v.to_string())),
        ("nm", c.nm.map(|v| v.to_string())),
        ("t2_us", c.t2_us.map(|v| v.to_string())),
        ("threshold", c.threshold.map(|v| v.to_string())),
        ("min_area", c.min_area.map(|v| v.to_string())),
        ("out", p(&c.out)),
        ("manifest", p(&c.manifest)),
        ("images", p(&c.images)),
        ("workers", c.workers.map(|v| v.to_string())),
    ];
    flags.extend(cli.command.flags());
    let cfg = RunConfig::resolve(c.config.as_deref(), &flags)?;
    let name = cli.command.name();
    let out = cfg.require_path("out")?;
    create_dir(&out)?;
    let log = out.join(format!("{name}.run.cfg"));
    std::fs::write(&log, cfg.to_text(name)).map_err(|e| Error::io(&log, e))?;

    let workers: usize = cfg.get("workers")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Generate { .. } => cmd_generate(&cfg, &out),
        Command::RenderTargets => cmd_render_targets(&cfg, &out),
        Command::Detect => cmd_detect(&cfg, &out),
        Command::Evaluate { .. } => cmd_evaluate(&cfg, &out),
        Command::OracleCheck { .. } => cmd_oracle_check(&cfg),
        Command::BaselinePeaks { .. } => cmd_baseline_peaks(&cfg, &out),
        Command::Robustness { .. } => cmd_robustness(&cfg, &out),
        Command::Selectivity { .. } => cmd_selectivity(&cfg, &out),
        Command::ExportTraces { .. } => cmd_export_traces(&cfg, &out),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Dataset from a directory or from the path of its manifest.
fn load_dataset(path: &Path) -> Result<(GenerationSpec, Manifest)> {
    if path.is_dir() {
        open_dataset(path)
    } else {
        open_dataset(path.parent().unwrap_or(Path::new(".")))
    }
}

fn manifest_digest(dir: &Path) -> Result<String> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(dataset::file_digest(&bytes))
}

fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("expected `x:y`, got `{item}`")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("not a number: `{s}`")))
            };
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

fn nuclei_from_khz(text: &str) -> Result<Vec<Nucleus>> {
    parse_pairs(text)?
        .into_iter()
        .map(|(a, b)| Nucleus::from_khz(a, b))
        .collect()
}

fn spec_from_config(cfg: &RunConfig) -> Result<GenerationSpec> {
    let mut spec = GenerationSpec::with_field(cfg.b_z()?, cfg.get("samples")?, cfg.get("seed")?);
    spec.n_range = (cfg.get("n_min")?, cfg.get("n_max")?);
    spec.noise.n_measurements = cfg.get("nm")?;
    spec.noise.t2 = cfg.get::<f64>("t2_us")? * 1e-6;
    spec.validate()?;
    Ok(spec)
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = spec_from_config(cfg)?;
    let opts = GenerateOptions {
        workers: cfg.get("workers")?,
        shard_size: cfg.get("shard_size")?,
    };
    let all = out.join("all");
    let manifest = generate(&spec, &all, &opts)?;
    let split_seed = derive_seed(spec.seed, SPLIT_TAG);
    let parts = split(
        &manifest,
        &spec,
        &SplitRatios::default(),
        split_seed,
        out,
        opts.shard_size,
    )?;
    let stats = compute_normalization(&parts.train, Some(&spec.digest()))?;
    stats.save(out.join("normalization.bin"))?;
    println!("samples    {}", manifest.total());
    for entry in &manifest.entries {
        println!("shard      {}  {}", entry.path.display(), entry.digest);
    }
    println!("manifest   {}", manifest_digest(&all)?);
    println!(
        "split      train {} / val {} / test {}",
        parts.train.total(),
        parts.val.total(),
        parts.test.total()
    );
    Ok(())
}

fn cmd_render_targets(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (spec, manifest) = load_dataset(&cfg.require_path("manifest")?)?;
    let grid = GridSpec::default();
    let mut written = 0u64;
    manifest.for_each_shard(Some(&spec.digest()), |records| {
        records.par_iter().try_for_each(|r| {
            render_target(&r.nuclei, &grid)?.save(&out.join(image_file_name(r.sample_id)))
        })?;
        written += records.len() as u64;
        Ok(())
    })?;
    println!("rendered {written} targets into {}", out.display());
    Ok(())
}

fn list_images(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(id) = entry.file_name().to_str().and_then(parse_image_file_name) {
            out.push((id, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn detect_image(path: &Path, grid: &GridSpec, pp: &PostProcessConfig) -> Result<Vec<Detection>> {
    post_process(&HeatImage::load(path)?, grid, pp)
}

fn cmd_detect(cfg: &RunConfig, out: &Path) -> Result<()> {
    let images = cfg.require_path("images")?;
    let grid = GridSpec::default();
    let pp = cfg.post_process()?;
    let files = list_images(&images)?;
    let per_image: Vec<Vec<DetectionRow>> = files
        .par_iter()
        .map(|(id, path)| {
            Ok(detect_image(path, &grid, &pp)?
                .iter()
                .map(|d| DetectionRow::new(*id, d))
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<DetectionRow> = per_image.into_iter().flatten().collect();
    write_detections(&out.join("detections.csv"), &rows)?;
    println!("{} images, {} detections", files.len(), rows.len());
    Ok(())
}

/// Detections per sample from a table or by decoding one image per sample.
enum DetectionSource {
    Table(BTreeMap<u64, Vec<Detection>>),
    Images(PathBuf, PostProcessConfig),
}

impl DetectionSource {
    fn from_config(cfg: &RunConfig, images: Option<PathBuf>) -> Result<Self> {
        let grid = GridSpec::default();
        if let Some(table) = cfg.path("detections") {
            Ok(Self::Table(read_detections(&table, &grid)?))
        } else if let Some(dir) = images {
            Ok(Self::Images(dir, cfg.post_process()?))
        } else {
            Err(Error::Config(
                "evaluation needs `--detections <csv>` or `--images <dir>`".into(),
            ))
        }
    }

    fn detections(&self, sample_id: u64, grid: &GridSpec) -> Result<Vec<Detection>> {
        match self {
            Self::Table(map) => Ok(map.get(&sample_id).cloned().unwrap_or_default()),
            Self::Images(dir, pp) => {
                let path = dir.join(image_file_name(sample_id));
                if !path.exists() {
                    return Err(Error::Misaligned(format!(
                        "no heat map for sample {sample_id} in {}",
                        dir.display()
                    )));
                }
                detect_image(&path, grid, pp)
            }
        }
    }
}

fn evaluate_dataset(
    spec: &GenerationSpec,
    manifest: &Manifest,
    source: &DetectionSource,
) -> Result<Vec<SampleEvaluation>> {
    let grid = GridSpec::default();
    let mut evals = Vec::new();
    manifest.for_each_shard(Some(&spec.digest()), |records: Vec<SampleRecord>| {
        let part: Vec<SampleEvaluation> = records
            .par_iter()
            .map(|r| evaluate_record(r, spec, &source.detections(r.sample_id, &grid)?, &grid))
            .collect::<Result<_>>()?;
        evals.extend(part);
        Ok(())
    })?;
    Ok(evals)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn print_summary(s: &MetricsSummary) {
    println!("n_true  samples  precision  recall  mae_apar_hz  mae_aperp_hz  mae_sig32  mae_sig256");
    for row in s.rows.iter().chain(std::iter::once(&s.overall)) {
        let label = if row.n_true == 0 {
            "all".to_string()
        } else {
            row.n_true.to_string()
        };
        println!(
            "{label:>6}  {:>7}  {:>9.4}  {:>6.4}  {:>11}  {:>12}  {:>9}  {:>10}",
            row.samples,
            row.precision,
            row.recall,
            fmt_opt(row.mae_apar_hz),
            fmt_opt(row.mae_aperp_hz),
            fmt_opt(row.mae_sig32),
            fmt_opt(row.mae_sig256),
        );
    }
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (spec, manifest) = load_dataset(&cfg.require_path("manifest")?)?;
    let source = DetectionSource::from_config(cfg, cfg.path("images"))?;
    let evals = evaluate_dataset(&spec, &manifest, &source)?;
    let summary = aggregate(&evals)?;
    summary.write_csv(&out.join("metrics.csv"))?;
    write_audit_log(&out.join("audit.jsonl"), &evals)?;
    print_summary(&summary);
    Ok(())
}

fn cmd_oracle_check(cfg: &RunConfig) -> Result<()> {
    let n: usize = cfg.get("n")?;
    let trials: u64 = cfg.get("trials")?;
    let seed: u64 = cfg.get("seed")?;
    let b_z = cfg.b_z()?;
    if n > ORACLE_MAX_NUCLEI {
        return Err(Error::OracleScale {
            nuclei: n,
            limit: ORACLE_MAX_NUCLEI,
        });
    }
    let template = GenerationSpec::with_field(b_z, 0, seed);
    let worst = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = keyed_rng(seed, t, Channel::Node, 1);
            let nuclei = (0..n)
                .map(|_| {
                    Nucleus::new(
                        rng.random_range(template.a_par_range.0..=template.a_par_range.1),
                        rng.random_range(template.a_perp_range.0..=template.a_perp_range.1),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let node = QuantumNode::new(nuclei, b_z)?;
            let mut worst = 0.0f64;
            for seq in &template.sequences {
                let closed = survival_probability(&node, seq);
                let exact = oracle_survival(&node, seq)?;
                for (a, b) in closed.values.iter().zip(&exact.values) {
                    worst = worst.max((a - b).abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("nodes {trials}, nuclei per node {n}, B_z {b_z} T");
    println!("max |dP_x| = {worst:.3e}");
    if worst > ORACLE_TOLERANCE {
        return Err(Error::CheckFailed(format!(
            "closed form deviates from the oracle by {worst:.3e} > {ORACLE_TOLERANCE:e}"
        )));
    }
    Ok(())
}

/// Trace chosen by `--sample`/`--slot` from a dataset, or the noiseless
/// trace of `--nuclei-khz` for every sequence.
fn selected_traces(cfg: &RunConfig) -> Result<(f64, Vec<(u64, usize, SignalTrace)>)> {
    if let Some(text) = cfg.values.raw("nuclei_khz") {
        let node = QuantumNode::new(nuclei_from_khz(text)?, cfg.b_z()?)?;
        let t2 = cfg.get::<f64>("t2_us")? * 1e-6;
        let traces = [PulseSequence::cpmg32(), PulseSequence::cpmg256()]
            .iter()
            .enumerate()
            .map(|(slot, seq)| {
                let clean = survival_probability(&node, seq);
                Ok((0, slot, apply_decoherence(&clean, t2)?))
            })
            .collect::<Result<_>>()?;
        return Ok((node.b_z, traces));
    }
    let (spec, manifest) = load_dataset(&cfg.require_path("manifest")?)?;
    let wanted: Option<u64> = cfg.get_opt("sample")?;
    let mut out = Vec::new();
    manifest.for_each_shard(Some(&spec.digest()), |records| {
        for r in records {
            if wanted.is_none_or(|w| w == r.sample_id) {
                for (slot, seq) in spec.sequences.iter().enumerate() {
                    out.push((r.sample_id, slot, r.trace(slot, seq)?));
                }
            }
        }
        Ok(())
    })?;
    if out.is_empty() {
        return Err(Error::EmptyDataset(format!("no sample matches {wanted:?}")));
    }
    Ok((spec.b_z, out))
}

fn cmd_baseline_peaks(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (b_z, traces) = selected_traces(cfg)?;
    let slot: usize = cfg.get("slot")?;
    let quantile: f64 = cfg.get("quantile")?;
    let band = 2.0 * std::f64::consts::PI * cfg.get::<f64>("band_khz")? * 1e3;
    let omega_l = crate::signal::larmor_omega(b_z);
    let (sample_id, _, trace) = traces
        .into_iter()
        .find(|(_, s, _)| *s == slot)
        .ok_or_else(|| Error::InvalidParameter(format!("no trace in slot {slot}")))?;
    let dips = find_dips(&trace, DipThreshold::Quantile(quantile));
    let cands = resonance_candidates(&dips, omega_l, band);
    let mut csv = String::from("sample_id,tau_us,p_x,k,omega_tilde_khz\n");
    for c in &cands {
        let _ = writeln!(
            csv,
            "{sample_id},{},{},{},{}",
            c.dip.tau * 1e6,
            c.dip.value,
            c.k,
            c.omega_tilde / (2.0 * std::f64::consts::PI) / 1e3
        );
    }
    write_text(&out.join("baseline_peaks.csv"), &csv)?;
    println!(
        "{} dips, {} candidates (f_L = {:.3} kHz)",
        dips.len(),
        cands.len(),
        omega_l / (2.0 * std::f64::consts::PI) / 1e3
    );
    for d in &dips {
        let fs: Vec<String> = cands
            .iter()
            .filter(|c| c.dip == *d)
            .map(|c| {
                format!(
                    "k={} {:.2} kHz",
                    c.k,
                    c.omega_tilde / (2.0 * std::f64::consts::PI) / 1e3
                )
            })
            .collect();
        println!("  tau {:>8.4} us  P_x {:.4}  {}", d.tau * 1e6, d.value, fs.join(", "));
    }
    Ok(())
}

fn cmd_robustness(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (spec, manifest) = load_dataset(&cfg.require_path("manifest")?)?;
    let levels: Vec<u32> = cfg
        .values
        .raw("levels")
        .unwrap_or_default()
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad level `{s}`")))
        })
        .collect::<Result<_>>()?;
    let opts = GenerateOptions {
        workers: cfg.get("workers")?,
        ..GenerateOptions::default()
    };
    let images = cfg.path("images");
    let mut per_level = Vec::new();
    for &nm in &levels {
        let dir = out.join(format!("nm{nm}"));
        let (level_spec, level_manifest) = renoise(&manifest, &spec, nm, &dir, &opts)?;
        println!("N_m {nm:>5}: dataset {}", dir.display());
        if let Some(root) = &images {
            let source = DetectionSource::from_config(cfg, Some(root.join(format!("nm{nm}"))))?;
            let evals = evaluate_dataset(&level_spec, &level_manifest, &source)?;
            let summary = aggregate(&evals)?;
            summary.write_csv(&dir.join("metrics.csv"))?;
            write_audit_log(&dir.join("audit.jsonl"), &evals)?;
            per_level.push((nm, evals));
        }
    }
    if images.is_none() {
        println!("no --images given: re-acquired datasets written, evaluation skipped (partial run)");
        return Ok(());
    }
    let mut csv = String::from(
        "n_measurements,precision,recall,mae_apar_hz,mae_aperp_hz,mae_sig32,mae_sig256\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (nm, s) in robustness_sweep(&per_level)? {
        let o = &s.overall;
        let _ = writeln!(
            csv,
            "{nm},{},{},{},{},{},{}",
            o.precision,
            o.recall,
            opt(o.mae_apar_hz),
            opt(o.mae_aperp_hz),
            opt(o.mae_sig32),
            opt(o.mae_sig256)
        );
        println!("N_m {nm:>5}: P {:.4}  R {:.4}", o.precision, o.recall);
    }
    write_text(&out.join("robustness.csv"), &csv)
}

fn cmd_selectivity(cfg: &RunConfig, out: &Path) -> Result<()> {
    let base = parse_pairs(cfg.values.raw("base_khz").unwrap_or_default())?;
    let &[(bp, bq)] = base.as_slice() else {
        return Err(Error::Config("`base_khz` must hold one `a_par:a_perp` pair".into()));
    };
    let offsets: Vec<(f64, f64)> = parse_pairs(cfg.values.raw("offsets_khz").unwrap_or_default())?
        .into_iter()
        .map(|(a, b)| (a * 1e3, b * 1e3))
        .collect();
    let points = selectivity_scan(
        Nucleus::from_khz(bp, bq)?,
        &offsets,
        &GridSpec::default(),
        &cfg.post_process()?,
    )?;
    let mut csv = String::from("offset_par_khz,offset_perp_khz,detections\n");
    for p in &points {
        let _ = writeln!(csv, "{},{},{}", p.offset.0 / 1e3, p.offset.1 / 1e3, p.detections);
        println!(
            "offset ({:>5.2}, {:>5.2}) kHz -> {} detection(s)",
            p.offset.0 / 1e3,
            p.offset.1 / 1e3,
            p.detections
        );
    }
    write_text(&out.join("selectivity.csv"), &csv)
}

fn cmd_export_traces(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (_, traces) = selected_traces(cfg)?;
    let mut csv = String::from("sample_id,n_pulses,tau_us,p_x\n");
    for (id, _, t) in &traces {
        for (tau, v) in t.taus().zip(&t.values) {
            let _ = writeln!(csv, "{id},{},{},{v}", t.sequence.n_pulses(), tau * 1e6);
        }
    }
    let path = out.join("traces.csv");
    write_text(&path, &csv)?;
    println!("{} traces written to {}", traces.len(), path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "seed = 5\nbz = 0.01\nthreshold = 0.2\n").unwrap();
        let cfg = RunConfig::resolve(
            Some(&file),
            &[("seed", Some("9".into())), ("threshold", None)],
        )
        .unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), 9);
        assert_eq!(cfg.get::<f32>("threshold").unwrap(), 0.2);
        assert_eq!(cfg.b_z().unwrap(), 0.01);
        assert_eq!(cfg.get::<u32>("nm").unwrap(), 1000);

        // an explicit field flag beats a field strength from the file
        let cfg = RunConfig::resolve(Some(&file), &[("field", Some("low".into()))]).unwrap();
        assert_eq!(cfg.b_z().unwrap(), crate::signal::LOW_FIELD_T);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "sed = 5\n").unwrap();
        assert!(matches!(
            RunConfig::resolve(Some(&file), &[]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn pair_lists() {
        assert_eq!(
            parse_pairs("7:7, -1.5:2").unwrap(),
            vec![(7.0, 7.0), (-1.5, 2.0)]
        );
        assert!(parse_pairs("7").is_err());
    }
}
