//! Command-line drivers: manifests, the phantom generator and one function
//! per verb. Every command writes into `--out` and is byte-reproducible for
//! identical inputs and seed.

pub mod commands;
pub mod manifest;
pub mod output;
pub mod phantom;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::atrophy::{SegParams, SweepGrid};
use crate::diagnostics::SampleAgreement;
use crate::registration::RegisterConfig;
pub use manifest::{EyeEntry, LoadedManifest, Manifest, VisitEntry};
pub use phantom::{generate, generate_eye, write_phantom, PhantomEye, PhantomSpec, PhantomVisit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyConfig {
    pub changed_threshold: f64,
    pub strata_edges: Vec<f64>,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            changed_threshold: 0.05,
            strata_edges: vec![0.25, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PosteriorConfig {
    pub k: usize,
    pub agreement: SampleAgreement,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            k: 10,
            agreement: SampleAgreement::AllPairs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Visits whose quality score falls below this are dropped.
    pub quality_cutoff: Option<f64>,
}

/// Contents of `--config`; every section and field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub segmentation: SegParams,
    pub sweep: SweepGrid,
    pub registration: RegisterConfig,
    pub entropy: EntropyConfig,
    pub posterior: PosteriorConfig,
    pub ingest: IngestConfig,
    pub phantom: PhantomSpec,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "longlens",
    version,
    about = "Longitudinal image prediction diagnostics"
)]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "longlens_out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against each eye's last visit.
    Evaluate(EvaluateArgs),
    /// Paired Wilcoxon tests between two metric CSVs.
    Compare(CompareArgs),
    /// Task-entropy analysis of consecutive visit pairs.
    Entropy(ManifestArg),
    /// Bias-variance decomposition of stochastic predictions.
    Posterior(PosteriorArgs),
    /// Keypoint registration, cropping, harmonization and chirality flip.
    Register(ManifestArg),
    /// Histogram matching and chirality flip without geometry.
    Harmonize(ManifestArg),
    /// Segmentation-parameter sensitivity sweep.
    SegSweep(SweepArgs),
    /// Generate a synthetic longitudinal dataset.
    Phantom(PhantomArgs),
    /// Reference predictions for each eye's last visit.
    Baseline(BaselineArgs),
    /// Resolve same-day duplicates and apply the quality cutoff.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct ManifestArg {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `<eye_id>_<target_index>.llf1|.pgm`.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value = "method")]
    pub method: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub csv_a: PathBuf,
    pub csv_b: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "mae,psnr,ssim,delta_ssim,dice,hd95"
    )]
    pub metrics: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PosteriorArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `name=dir` holding `<eye_id>_s<k>.llf1|.pgm`; repeatable.
    #[arg(long = "samples", required = true)]
    pub samples: Vec<String>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `name=dir` of predictions; at least two.
    #[arg(long = "method", required = true)]
    pub methods: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// JSON phantom spec (overrides the config section).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n_eyes: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub growth: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub keypoints: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    CopyLast,
    Spline,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(value_enum)]
    pub kind: BaselineKind,
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cutoff: Option<f64>,
}

/// Result of a command that did not fail outright.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    /// Per-eye failures that were recorded and skipped.
    Partial(Vec<String>),
}

impl Outcome {
    pub fn from_failures(failures: Vec<String>) -> Self {
        if failures.is_empty() {
            Outcome::Complete
        } else {
            Outcome::Partial(failures)
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Complete => 0,
            Outcome::Partial(_) => 2,
        }
    }
}

/// Resolved global options shared by every command.
pub struct RunContext {
    pub config: Config,
    pub seed: u64,
    /// `--seed` when given explicitly.
    pub seed_override: Option<u64>,
    pub out: PathBuf,
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = RunContext {
        config,
        seed: cli.seed.unwrap_or(0),
        seed_override: cli.seed,
        out: cli.out.clone(),
    };
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    let body = || match &cli.command {
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Compare(a) => commands::compare(&ctx, a),
        Command::Entropy(a) => commands::entropy(&ctx, &a.manifest),
        Command::Posterior(a) => commands::posterior(&ctx, a),
        Command::Register(a) => commands::register(&ctx, &a.manifest),
        Command::Harmonize(a) => commands::harmonize(&ctx, &a.manifest),
        Command::SegSweep(a) => commands::seg_sweep(&ctx, a),
        Command::Phantom(a) => commands::phantom(&ctx, a),
        Command::Baseline(a) => commands::baseline(&ctx, a),
        Command::Ingest(a) => commands::ingest(&ctx, a),
    };
    match cli.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .context("building worker pool")?
            .install(body),
        None => body(),
    }
}

/// Parses arguments, runs, reports and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(o @ Outcome::Partial(_)) => {
            if let Outcome::Partial(f) = &o {
                for msg in f {
                    eprintln!("warning: {msg}");
                }
            }
            ExitCode::from(o.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
