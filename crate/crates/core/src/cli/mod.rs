//! Command-line front end. Every subcommand resolves its settings from
//! flags, then the `--config` document, then defaults, and echoes the
//! resolved [`RunConfig`] next to its outputs.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

mod benchmark;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use benchmark::{
    benchmark, upsample_with, BenchmarkRow, BenchmarkTable, UpsampleMethod, VolumeScore,
    BENCHMARK_CSV_HEADER, EXPECTED_ORDERING,
};

use crate::acquisition::{
    degrade, gen_training_pairs, read_pair_archive, write_pair_archive, DegradeConfig, DegradeMode,
    RigidMotion,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, write_dssim_pngs};
use crate::srnet::{
    gradcheck, load_checkpoint, save_checkpoint, train_with, GradcheckConfig, GradcheckReport,
    TrainConfig,
};
use crate::svr::{
    read_stack_archive, reconstruct, simulate_stacks, stack_training_pairs, write_stack_archive,
    AcquisitionConfig, ReconConfig, Upsampler,
};
use crate::volume::{
    generate_phantom, import_nifti1, normalize_intensity, read_volume, write_volume, PhantomKind,
    PhantomSpec,
};

/// Semantic version plus the checkpoint format this build reads and writes.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (checkpoint format 1)");

/// Gradient checks fail above this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

pub const RUN_CONFIG_FILE: &str = "run.json";

#[derive(Debug, Parser)]
#[command(name = "volsr", version = VERSION, about = "Volumetric MR super-resolution toolkit")]
pub struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads, 0 = one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom volume.
    Phantom(PhantomArgs),
    /// Import a NIfTI-1 volume.
    Import(ImportArgs),
    /// Blur, decimate and add noise to a high-resolution volume.
    Degrade(DegradeArgs),
    /// Build a training-pair archive from high-resolution volumes.
    Pairs(PairsArgs),
    /// Train the super-resolution network.
    Train(TrainArgs),
    /// Upsample a low-resolution volume in-plane.
    Upsample(UpsampleArgs),
    /// Score a prediction against ground truth.
    Metrics(MetricsArgs),
    /// Simulate motion-corrupted orthogonal stacks.
    Stacks(StacksArgs),
    /// Slice-to-volume reconstruction from stack archives.
    Reconstruct(ReconstructArgs),
    /// Finite-difference check of the network gradients.
    Gradcheck(GradcheckArgs),
    /// Compare upsampling methods over a corpus.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// JSON phantom spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub spacing: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub detail_scale: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Percentile-clip and rescale to [0, 1].
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct DegradeFlags {
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// blur | linear
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub degrade: DegradeFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// High-resolution volume; repeatable.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Directory of `.vvol` volumes, used in file-name order.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub degrade: DegradeFlags,
    #[arg(long)]
    pub z_slices: Option<usize>,
    /// Cut pairs from full-resolution simulated stacks of each input, using
    /// the config's acquisition settings with the in-plane factor of --factor.
    #[arg(long)]
    pub stack_slices: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UpsampleArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// none | linear | trilinear | bspline | cnn
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write the DSSIM map volume and central-plane PNG heatmaps.
    #[arg(long)]
    pub heatmaps: bool,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StacksArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub n_stacks: Option<usize>,
    #[arg(long)]
    pub sigma_translation: Option<f64>,
    #[arg(long)]
    pub sigma_rotation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Stack archive directory; repeatable.
    #[arg(long)]
    pub stacks: Vec<PathBuf>,
    /// none | linear | bspline | cnn
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub outer_iterations: Option<usize>,
    #[arg(long)]
    pub sr_steps: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub em_iterations: Option<usize>,
    #[arg(long)]
    pub no_em: bool,
    #[arg(long)]
    pub reapply_cnn: bool,
    #[arg(long)]
    pub no_register: bool,
    /// Ground truth; adds metrics to the output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub degrade: DegradeFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// File and directory arguments of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stacks: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Every module configuration plus paths. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degrade: Option<DegradeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acquisition: Option<AcquisitionConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recon: Option<ReconConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradcheck: Option<GradcheckConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heatmaps: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stack_slices: Option<bool>,
    pub paths: RunPaths,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::param(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 1,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

/// Run a parsed command line; the `Ok` value is the exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(n) = cfg.threads {
        // A global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    cfg.version = Some(VERSION.to_string());
    match cli.command {
        Command::Phantom(a) => cmd_phantom(cfg, a),
        Command::Import(a) => cmd_import(cfg, a),
        Command::Degrade(a) => cmd_degrade(cfg, a),
        Command::Pairs(a) => cmd_pairs(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Upsample(a) => cmd_upsample(cfg, a),
        Command::Metrics(a) => cmd_metrics(cfg, a),
        Command::Stacks(a) => cmd_stacks(cfg, a),
        Command::Reconstruct(a) => cmd_reconstruct(cfg, a),
        Command::Gradcheck(a) => cmd_gradcheck(cfg, a),
        Command::Benchmark(a) => cmd_benchmark(cfg, a),
    }
}

fn pick<T>(flag: Option<T>, config: Option<T>) -> Option<T> {
    flag.or(config)
}

fn required(v: Option<PathBuf>, key: &str) -> Result<PathBuf> {
    v.ok_or_else(|| Error::param(format!("missing required --{key}")))
}

fn triple<T: Copy>(v: Vec<T>, key: &str) -> Result<[T; 3]> {
    <[T; 3]>::try_from(v).map_err(|v| {
        Error::param(format!(
            "--{key} needs 3 comma-separated values, got {}",
            v.len()
        ))
    })
}

fn ensure_parent(path: &Path) -> Result<PathBuf> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn echo(cfg: &RunConfig, path: &Path) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(cfg)? + "\n"))
}

/// Echo next to a single output file as `<file name>.run.json`.
fn echo_beside(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dir = ensure_parent(out)?;
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    echo(cfg, &dir.join(format!("{name}.run.json")))
}

fn resolve_degrade(
    base: Option<DegradeConfig>,
    flags: &DegradeFlags,
    factor_key: Option<usize>,
) -> Result<DegradeConfig> {
    let mut d = base.unwrap_or_else(|| DegradeConfig::new(2));
    if let Some(f) = flags.factor.or(factor_key) {
        d.factor = f;
    }
    if let Some(s) = flags.seed {
        d.seed = s;
    }
    if let Some(n) = flags.noise {
        d.noise_sigma = n;
    }
    if let Some(m) = &flags.mode {
        d.mode = m.parse::<DegradeMode>()?;
    }
    d.validate()?;
    Ok(d)
}

fn cmd_phantom(mut cfg: RunConfig, a: PhantomArgs) -> Result<i32> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::param(format!("phantom spec: {e}")))?
        }
        None => cfg
            .phantom
            .clone()
            .unwrap_or_else(|| PhantomSpec::new(PhantomKind::Mixed, [64, 64, 20], 0)),
    };
    if let Some(k) = &a.kind {
        spec.kind = k.parse()?;
    }
    if let Some(d) = a.dims {
        spec.dims = triple(d, "dims")?;
    }
    if let Some(s) = a.spacing {
        spec.spacing = triple(s, "spacing")?;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(d) = a.detail_scale {
        spec.detail_scale = d;
    }
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let v = generate_phantom(&spec)?;
    cfg.command = Some("phantom".into());
    cfg.phantom = Some(spec);
    cfg.paths.out = Some(out.clone());
    echo_beside(&cfg, &out)?;
    write_volume(&v, &out)?;
    println!("{}", out.display());
    Ok(0)
}

fn cmd_import(mut cfg: RunConfig, a: ImportArgs) -> Result<i32> {
    let input = required(pick(a.input, cfg.paths.input.clone()), "input")?;
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let normalize = a.normalize || cfg.normalize.unwrap_or(false);
    let mut v = import_nifti1(&input)?;
    if normalize {
        v = normalize_intensity(&v, 0.1, 99.9)?;
    }
    cfg.command = Some("import".into());
    cfg.normalize = Some(normalize);
    cfg.paths.input = Some(input);
    cfg.paths.out = Some(out.clone());
    echo_beside(&cfg, &out)?;
    write_volume(&v, &out)?;
    Ok(0)
}

fn cmd_degrade(mut cfg: RunConfig, a: DegradeArgs) -> Result<i32> {
    let input = required(pick(a.input, cfg.paths.input.clone()), "input")?;
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let d = resolve_degrade(cfg.degrade.take(), &a.degrade, cfg.factor)?;
    let hr = read_volume(&input)?;
    let lr = degrade(&hr, &d)?;
    cfg.command = Some("degrade".into());
    cfg.degrade = Some(d);
    cfg.paths.input = Some(input);
    cfg.paths.out = Some(out.clone());
    echo_beside(&cfg, &out)?;
    write_volume(&lr, &out)?;
    Ok(0)
}

fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "vvol") {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::param(format!(
            "no .vvol volumes in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn cmd_pairs(mut cfg: RunConfig, a: PairsArgs) -> Result<i32> {
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let mut inputs = if a.input.is_empty() {
        cfg.paths.inputs.clone()
    } else {
        a.input
    };
    let corpus = pick(a.corpus, cfg.paths.corpus.clone());
    if let Some(c) = &corpus {
        inputs.extend(corpus_files(c)?);
    }
    if inputs.is_empty() {
        return Err(Error::param("missing required --input or --corpus"));
    }
    let mut d = resolve_degrade(cfg.degrade.take(), &a.degrade, cfg.factor)?;
    if let Some(z) = a.z_slices {
        d.z_slices = z;
    }
    d.validate()?;
    let stack_slices = a.stack_slices || cfg.stack_slices.unwrap_or(false);
    let acq = if stack_slices {
        let mut acq = cfg.acquisition.take().unwrap_or_default();
        acq.inplane_factor = d.factor;
        acq.validate()?;
        Some(acq)
    } else {
        None
    };
    let mut pairs = Vec::new();
    for (i, p) in inputs.iter().enumerate() {
        let hr = read_volume(p)?;
        let per = DegradeConfig {
            seed: d.seed.wrapping_add(i as u64),
            ..d.clone()
        };
        match &acq {
            Some(acq) => {
                let acq = AcquisitionConfig {
                    seed: acq.seed.wrapping_add(i as u64),
                    ..acq.clone()
                };
                pairs.extend(stack_training_pairs(&hr, &acq, &per)?);
            }
            None => pairs.extend(gen_training_pairs(&hr, &per)?),
        }
    }
    ensure_dir(&out)?;
    write_pair_archive(&out, &pairs, &d)?;
    cfg.command = Some("pairs".into());
    cfg.degrade = Some(d);
    if stack_slices {
        cfg.stack_slices = Some(true);
        cfg.acquisition = acq;
    }
    cfg.paths.inputs = inputs;
    cfg.paths.corpus = corpus;
    cfg.paths.out = Some(out.clone());
    echo(&cfg, &out.join(RUN_CONFIG_FILE))?;
    println!("{} pairs", pairs.len());
    Ok(0)
}

pub const MODEL_FILE: &str = "model.vnet";
pub const LAST_FILE: &str = "last.vnet";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    best_epoch: usize,
    train_pairs: usize,
    val_pairs: usize,
    log: &'a [crate::srnet::EpochRecord],
}

fn cmd_train(mut cfg: RunConfig, a: TrainArgs) -> Result<i32> {
    let pairs_dir = required(pick(a.pairs, cfg.paths.pairs.clone()), "pairs")?;
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let mut t = cfg.train.take().unwrap_or_default();
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.width {
        t.hidden_width = v;
    }
    if let Some(v) = a.validation_fraction {
        t.validation_fraction = v;
    }
    if let Some(v) = a.checkpoint_every {
        t.checkpoint_every = v;
    }
    t.validate()?;
    if !pairs_dir.is_dir() {
        return Err(Error::NotFound(pairs_dir));
    }
    let (pairs, _) = read_pair_archive(&pairs_dir)?;
    ensure_dir(&out)?;
    cfg.command = Some("train".into());
    cfg.train = Some(t.clone());
    cfg.paths.pairs = Some(pairs_dir);
    cfg.paths.out = Some(out.clone());
    echo(&cfg, &out.join(RUN_CONFIG_FILE))?;
    let log_path = out.join(TRAIN_LOG_FILE);
    let mut log = String::new();
    let ckpt_dir = (t.checkpoint_every > 0).then_some(out.as_path());
    let outcome = train_with(&pairs, &t, ckpt_dir, |r| {
        if let Ok(line) = serde_json::to_string(r) {
            println!("{line}");
            log.push_str(&line);
            log.push('\n');
        }
    })?;
    write_text(&log_path, &log)?;
    save_checkpoint(&outcome.params, None, &out.join(MODEL_FILE))?;
    save_checkpoint(&outcome.params, Some(&outcome.state), &out.join(LAST_FILE))?;
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        train_pairs: outcome.train_indices.len(),
        val_pairs: outcome.val_indices.len(),
        log: &outcome.log,
    };
    write_text(
        &out.join("train_summary.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    Ok(0)
}

fn cmd_upsample(mut cfg: RunConfig, a: UpsampleArgs) -> Result<i32> {
    let input = required(pick(a.input, cfg.paths.input.clone()), "input")?;
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let method_s = pick(a.method, cfg.method.clone()).unwrap_or_else(|| "linear".into());
    let method: UpsampleMethod = method_s.parse()?;
    let checkpoint = pick(a.checkpoint, cfg.paths.checkpoint.clone());
    let params = match (&checkpoint, method) {
        (Some(p), UpsampleMethod::Cnn) => Some(load_checkpoint(p)?.params),
        (None, UpsampleMethod::Cnn) => return Err(Error::param("method cnn needs --checkpoint")),
        _ => None,
    };
    let factor = pick(a.factor, cfg.factor)
        .or(params.as_ref().map(|p| p.factor))
        .unwrap_or(2);
    let lr = read_volume(&input)?;
    let up = upsample_with(method, &lr, factor, params.as_ref())?;
    cfg.command = Some("upsample".into());
    cfg.method = Some(method.name().into());
    cfg.factor = Some(factor);
    cfg.paths.input = Some(input);
    cfg.paths.checkpoint = checkpoint;
    cfg.paths.out = Some(out.clone());
    echo_beside(&cfg, &out)?;
    write_volume(&up, &out)?;
    Ok(0)
}

fn cmd_metrics(mut cfg: RunConfig, a: MetricsArgs) -> Result<i32> {
    let pred_p = required(pick(a.pred, cfg.paths.pred.clone()), "pred")?;
    let truth_p = required(pick(a.truth, cfg.paths.truth.clone()), "truth")?;
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let heatmaps = a.heatmaps || cfg.heatmaps.unwrap_or(false);
    let pred = read_volume(&pred_p)?;
    let truth = read_volume(&truth_p)?;
    let mut report = evaluate(&pred, &truth)?;
    let dir = ensure_parent(&out)?;
    if heatmaps {
        let stem = out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "metrics".into());
        if let Some(map) = &report.dssim {
            let map_path = dir.join(format!("{stem}_dssim.vvol"));
            write_volume(map, &map_path)?;
            write_dssim_pngs(map, &dir, &stem)?;
            report.dssim_map = Some(map_path.to_string_lossy().into_owned());
        }
    }
    cfg.command = Some("metrics".into());
    cfg.heatmaps = Some(heatmaps);
    cfg.paths.pred = Some(pred_p);
    cfg.paths.truth = Some(truth_p);
    cfg.paths.out = Some(out.clone());
    echo_beside(&cfg, &out)?;
    report.write_json(&out)?;
    println!("{}", report.to_json()?);
    Ok(0)
}

fn stack_dir_name(axis: crate::volume::Axis) -> String {
    format!("stack_{axis}")
}

fn cmd_stacks(mut cfg: RunConfig, a: StacksArgs) -> Result<i32> {
    let input = required(pick(a.input, cfg.paths.input.clone()), "input")?;
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let mut acq = cfg.acquisition.take().unwrap_or_default();
    if let Some(v) = a.n_stacks {
        acq.n_stacks = v;
    }
    if let Some(v) = a.sigma_translation {
        acq.sigma_translation = v;
    }
    if let Some(v) = a.sigma_rotation {
        acq.sigma_rotation = v;
    }
    if let Some(v) = a.noise {
        acq.noise_sigma = v;
    }
    if let Some(v) = a.seed {
        acq.seed = v;
    }
    acq.validate()?;
    let hr = read_volume(&input)?;
    let sim = simulate_stacks(&hr, &acq)?;
    ensure_dir(&out)?;
    for st in &sim.stacks {
        write_stack_archive(&out.join(stack_dir_name(st.axis())), st)?;
    }
    let truth: Vec<&Vec<RigidMotion>> = sim.true_poses.iter().collect();
    write_text(
        &out.join("true_poses.json"),
        &(serde_json::to_string_pretty(&truth)? + "\n"),
    )?;
    cfg.command = Some("stacks".into());
    cfg.acquisition = Some(acq);
    cfg.paths.input = Some(input);
    cfg.paths.out = Some(out.clone());
    echo(&cfg, &out.join(RUN_CONFIG_FILE))?;
    Ok(0)
}

pub const RECON_FILE: &str = "recon.vvol";
pub const RECON_REPORT_FILE: &str = "recon_report.json";

fn cmd_reconstruct(mut cfg: RunConfig, a: ReconstructArgs) -> Result<i32> {
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let stack_dirs = if a.stacks.is_empty() {
        cfg.paths.stacks.clone()
    } else {
        a.stacks
    };
    if stack_dirs.is_empty() {
        return Err(Error::param("missing required --stacks"));
    }
    let mut rc = cfg.recon.take().unwrap_or_default();
    if let Some(v) = a.outer_iterations {
        rc.outer_iterations = v;
    }
    if let Some(v) = a.sr_steps {
        rc.sr_steps = v;
    }
    if let Some(v) = a.alpha {
        rc.alpha = v;
    }
    if let Some(v) = a.em_iterations {
        rc.em_iterations = v;
    }
    if a.no_em {
        rc.use_em = false;
    }
    if a.reapply_cnn {
        rc.reapply_cnn = true;
    }
    if a.no_register {
        rc.register = false;
    }
    rc.validate()?;
    let method = pick(a.method, cfg.method.clone()).unwrap_or_else(|| "linear".into());
    let checkpoint = pick(a.checkpoint, cfg.paths.checkpoint.clone());
    let upsampler = match method.as_str() {
        "none" => Upsampler::None,
        "linear" | "trilinear" => Upsampler::Linear,
        "bspline" | "b-spline" => Upsampler::BSpline,
        "cnn" => {
            let p = required(checkpoint.clone(), "checkpoint")?;
            Upsampler::Cnn(Box::new(load_checkpoint(&p)?.params))
        }
        other => {
            return Err(Error::param(format!(
                "unknown --method {other:?} (expected none, linear, bspline or cnn)"
            )))
        }
    };
    let stacks = stack_dirs
        .iter()
        .map(|d| read_stack_archive(d))
        .collect::<Result<Vec<_>>>()?;
    let truth_p = pick(a.truth, cfg.paths.truth.clone());
    let truth = truth_p.as_ref().map(read_volume).transpose()?;
    let r = reconstruct(&stacks, &rc, &upsampler)?;
    ensure_dir(&out)?;
    cfg.command = Some("reconstruct".into());
    cfg.method = Some(upsampler.tag().into());
    cfg.recon = Some(rc);
    cfg.paths.stacks = stack_dirs;
    cfg.paths.checkpoint = checkpoint;
    cfg.paths.truth = truth_p;
    cfg.paths.out = Some(out.clone());
    echo(&cfg, &out.join(RUN_CONFIG_FILE))?;
    write_volume(&r.volume, out.join(RECON_FILE))?;
    r.report.write_json(out.join(RECON_REPORT_FILE))?;
    if let Some(t) = &truth {
        let m = evaluate(&r.volume, t)?;
        m.write_json(&out.join("metrics.json"))?;
        println!("{}", m.to_json()?);
    }
    Ok(0)
}

fn cmd_gradcheck(mut cfg: RunConfig, a: GradcheckArgs) -> Result<i32> {
    let mut g = cfg.gradcheck.take().unwrap_or_default();
    if let Some(v) = a.width {
        g.width = v;
    }
    if let Some(v) = a.factor {
        g.factor = v;
    }
    if let Some(v) = a.seed {
        g.seed = v;
    }
    if let Some(v) = a.step {
        g.step = v;
    }
    let report: GradcheckReport = gradcheck(&g)?;
    println!(
        "max relative error {:.3e} over {} parameters",
        report.max_rel_error, report.params_checked
    );
    let out = pick(a.out, cfg.paths.out.clone());
    cfg.command = Some("gradcheck".into());
    cfg.gradcheck = Some(g);
    if let Some(dir) = &out {
        ensure_dir(dir)?;
        cfg.paths.out = out.clone();
        echo(&cfg, &dir.join(RUN_CONFIG_FILE))?;
        write_text(
            &dir.join("gradcheck.json"),
            &(serde_json::to_string_pretty(&report)? + "\n"),
        )?;
    }
    if report.max_rel_error < GRADCHECK_TOLERANCE {
        Ok(0)
    } else {
        eprintln!(
            "gradient check failed: {:.3e} >= {GRADCHECK_TOLERANCE:e} at {}[{}]",
            report.max_rel_error, report.worst_layer, report.worst_index
        );
        Ok(2)
    }
}

fn cmd_benchmark(mut cfg: RunConfig, a: BenchmarkArgs) -> Result<i32> {
    let corpus = required(pick(a.corpus, cfg.paths.corpus.clone()), "corpus")?;
    let out = required(pick(a.out, cfg.paths.out.clone()), "out")?;
    let names = pick(a.methods, cfg.methods.clone())
        .unwrap_or_else(|| vec!["none".into(), "linear".into(), "bspline".into()]);
    let methods = names
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<UpsampleMethod>>>()?;
    let checkpoint = pick(a.checkpoint, cfg.paths.checkpoint.clone());
    let params = match &checkpoint {
        Some(p) if methods.contains(&UpsampleMethod::Cnn) => Some(load_checkpoint(p)?.params),
        None if methods.contains(&UpsampleMethod::Cnn) => {
            return Err(Error::param("method cnn needs --checkpoint"))
        }
        _ => None,
    };
    let d = resolve_degrade(cfg.degrade.take(), &a.degrade, cfg.factor)?;
    let files = corpus_files(&corpus)?;
    let volumes = files
        .iter()
        .map(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            read_volume(p).map(|v| (name, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = benchmark(&volumes, &methods, &d, params.as_ref())?;
    cfg.command = Some("benchmark".into());
    cfg.degrade = Some(d);
    cfg.methods = Some(methods.iter().map(|m| m.name().to_string()).collect());
    cfg.paths.corpus = Some(corpus);
    cfg.paths.checkpoint = checkpoint;
    cfg.paths.out = Some(out.clone());
    ensure_dir(&out)?;
    echo(&cfg, &out.join(RUN_CONFIG_FILE))?;
    table.write(&out)?;
    print!("{}", table.to_csv());
    Ok(0)
}
