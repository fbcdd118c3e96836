//! `ringmark`: key generation, embedding, detection, attacks and evaluation.
//!
//! Settings resolve as built-in defaults, then `--config FILE`, then flags.
//! `RINGMARK_OUTPUT_DIR` and `RINGMARK_CACHE_DIR` set the output and
//! embedding-cache roots.
//!
//! Exit status: 0 on success (for `detect`, every image detected), 1 when
//! `detect` finds an image without the watermark, 2 on any execution error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ringmark::detector::{DetectionMode, NullModel, Parameterization};
use ringmark::io::BitDepth;
use ringmark::watermark::InjectionMode;
use ringmark::{Exec, Geometry};

use crate::commands::Outcome;
use crate::config::{parse_pipeline, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "ringmark", version, about = "Fourier ring watermarks for images via diffusion latents")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short = 'o', global = true)]
    output_dir: Option<PathBuf>,
    /// Backend id: spectral, linear or zero.
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(long, global = true)]
    latent_size: Option<usize>,
    #[arg(long, global = true)]
    timesteps: Option<usize>,
    /// Watermark key file.
    #[arg(long, global = true)]
    key: Option<PathBuf>,
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a watermark key.
    Keygen(KeygenArgs),
    /// Watermark images.
    Embed(EmbedArgs),
    /// Test images for the watermark.
    Detect(DetectArgs),
    /// Apply attack pipelines to images.
    Attack(AttackArgs),
    /// Embed, attack, detect and aggregate over a corpus.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct KeygenArgs {
    #[arg(long)]
    radius: Option<usize>,
    /// Latent channel; negative counts from the end.
    #[arg(long, allow_hyphen_values = true)]
    channel: Option<i64>,
    /// Latent geometry CxHxW; defaults to the backend's.
    #[arg(long)]
    geometry: Option<Geometry>,
    /// Key file to write; defaults to --key, then OUTPUT_DIR/key.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Input images.
    inputs: Vec<PathBuf>,
    /// Glob of input images, used when no paths are given.
    #[arg(long)]
    corpus: Option<String>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Generate this many toy images instead of reading inputs.
    #[arg(long)]
    toy: Option<usize>,
    #[arg(long)]
    ssim_threshold: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    injection: Option<InjectionArg>,
    #[arg(long, value_enum)]
    bit_depth: Option<DepthArg>,
    /// Output file for a single input.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Decision threshold p* on the score 1 - p.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    parameterization: Option<ParamArg>,
    /// Null sample count in calibrated mode.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    null: Option<NullArg>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    domain: Option<InjectionArg>,
    /// Search rotations in steps of this many degrees.
    #[arg(long, value_name = "STEP")]
    rotation_correct: Option<f64>,
    /// Also write all results to this JSON file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Pipeline: a preset, `name`, `name:k=v,...`, or stages joined by `+`.
    /// Repeat for several pipelines.
    #[arg(long = "attack", short = 'a')]
    attacks: Vec<String>,
    /// Fill adapter slots (bm3d, bmshj18, cheng20, regeneration) with toy stand-ins.
    #[arg(long)]
    toy_adapters: bool,
    #[arg(long, value_enum)]
    bit_depth: Option<DepthArg>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Glob of images to watermark; toy images are generated otherwise.
    #[arg(long)]
    corpus: Option<String>,
    /// Glob of never-watermarked images.
    #[arg(long)]
    pristine: Option<String>,
    #[arg(long)]
    toy_count: Option<usize>,
    #[arg(long)]
    pristine_count: Option<usize>,
    #[arg(long = "attack", short = 'a')]
    attacks: Vec<String>,
    /// Comma-separated thresholds p*.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, value_name = "STEP")]
    rotation_correct: Option<f64>,
    #[arg(long)]
    toy_adapters: bool,
    /// Base name of the report files.
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Analytic,
    Calibrated,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ParamArg {
    Complex,
    RealDimension,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NullArg {
    WhiteLatent,
    ComplexGaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InjectionArg {
    Fourier,
    Spatial,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DepthArg {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

impl From<InjectionArg> for InjectionMode {
    fn from(a: InjectionArg) -> Self {
        match a {
            InjectionArg::Fourier => InjectionMode::Fourier,
            InjectionArg::Spatial => InjectionMode::Spatial,
        }
    }
}

impl From<DepthArg> for BitDepth {
    fn from(a: DepthArg) -> Self {
        match a {
            DepthArg::Eight => BitDepth::Eight,
            DepthArg::Sixteen => BitDepth::Sixteen,
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_global(cli: &Cli, cfg: &mut RunConfig) {
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.backend.id, cli.backend.clone());
    set(&mut cfg.backend.latent_size, cli.latent_size);
    set(&mut cfg.backend.timesteps, cli.timesteps);
    if cli.output_dir.is_some() {
        cfg.output_dir = cli.output_dir.clone();
    }
    if cli.key.is_some() {
        cfg.key = cli.key.clone();
    }
}

fn apply_detect(a: &DetectArgs, cfg: &mut RunConfig) -> Result<()> {
    let d = &mut cfg.detect;
    set(&mut d.threshold, a.threshold);
    set(&mut d.steps, a.steps);
    set(&mut d.domain, a.domain.map(Into::into));
    if let Some(m) = a.mode {
        d.mode = match (m, d.mode) {
            (ModeArg::Analytic, m @ DetectionMode::Analytic { .. }) => m,
            (ModeArg::Analytic, _) => DetectionMode::default(),
            (ModeArg::Calibrated, m @ DetectionMode::Calibrated { .. }) => m,
            (ModeArg::Calibrated, _) => DetectionMode::calibrated(10_000, cfg.seed),
        };
    }
    match &mut d.mode {
        DetectionMode::Analytic { parameterization } => {
            if a.samples.is_some() || a.null.is_some() {
                return Err(CliError::Usage("--samples and --null need --mode calibrated".into()));
            }
            if let Some(p) = a.parameterization {
                *parameterization = match p {
                    ParamArg::Complex => Parameterization::Complex,
                    ParamArg::RealDimension => Parameterization::RealDimension,
                };
            }
        }
        DetectionMode::Calibrated { samples, null, .. } => {
            if a.parameterization.is_some() {
                return Err(CliError::Usage("--parameterization applies to analytic mode only".into()));
            }
            set(samples, a.samples);
            if let Some(n) = a.null {
                *null = match n {
                    NullArg::WhiteLatent => NullModel::WhiteLatent,
                    NullArg::ComplexGaussian => NullModel::ComplexGaussian,
                };
            }
        }
    }
    if a.rotation_correct.is_some() {
        cfg.rotation_step = a.rotation_correct;
    }
    Ok(())
}

fn pipelines(specs: &[String], cfg: &mut RunConfig) -> Result<()> {
    if !specs.is_empty() {
        cfg.attacks = specs.iter().map(|s| parse_pipeline(s)).collect::<Result<_>>()?;
    }
    Ok(())
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply_global(cli, &mut cfg);
    match &cli.command {
        Command::Keygen(a) => {
            set(&mut cfg.keygen.radius, a.radius);
            set(&mut cfg.keygen.channel, a.channel);
        }
        Command::Embed(a) => {
            let e = &mut cfg.embed;
            set(&mut e.ssim_threshold, a.ssim_threshold);
            set(&mut e.steps, a.steps);
            set(&mut e.max_iterations, a.max_iterations);
            set(&mut e.learning_rate, a.learning_rate);
            set(&mut e.injection, a.injection.map(Into::into));
            set(&mut cfg.bit_depth, a.bit_depth.map(Into::into));
            if a.input.corpus.is_some() {
                cfg.corpus = a.input.corpus.clone();
            }
            set(&mut cfg.evaluate.toy_corpus.count, a.toy);
        }
        Command::Detect(a) => {
            apply_detect(a, &mut cfg)?;
            if a.input.corpus.is_some() {
                cfg.corpus = a.input.corpus.clone();
            }
        }
        Command::Attack(a) => {
            pipelines(&a.attacks, &mut cfg)?;
            cfg.toy_adapters |= a.toy_adapters;
            set(&mut cfg.bit_depth, a.bit_depth.map(Into::into));
            if a.input.corpus.is_some() {
                cfg.corpus = a.input.corpus.clone();
            }
        }
        Command::Evaluate(a) => {
            pipelines(&a.attacks, &mut cfg)?;
            cfg.toy_adapters |= a.toy_adapters;
            if a.corpus.is_some() {
                cfg.corpus = a.corpus.clone();
            }
            if a.pristine.is_some() {
                cfg.pristine = a.pristine.clone();
            }
            if a.rotation_correct.is_some() {
                cfg.rotation_step = a.rotation_correct;
            }
            set(&mut cfg.evaluate.toy_corpus.count, a.toy_count);
            set(&mut cfg.evaluate.toy_pristine.count, a.pristine_count);
            set(&mut cfg.evaluate.thresholds, a.thresholds.clone());
            set(&mut cfg.evaluate.report_stem, a.stem.clone());
        }
    }
    Ok(cfg)
}

fn exec_mode(jobs: Option<usize>) -> Result<Exec> {
    match jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            Ok(Exec::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Exec::Sequential),
        None if cfg!(feature = "parallel") => Ok(Exec::Parallel),
        None => Ok(Exec::Sequential),
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let cfg = resolve(&cli)?;
    let exec = exec_mode(cli.jobs)?;
    let ctx = commands::Context::new(cfg, exec)?;
    match &cli.command {
        Command::Keygen(a) => commands::keygen(&ctx, a.geometry, a.out.as_deref()),
        Command::Embed(a) => commands::embed(&ctx, &a.input.inputs, a.toy.is_some(), a.output.as_deref()),
        Command::Detect(a) => commands::detect(&ctx, &a.input.inputs, a.report.as_deref()),
        Command::Attack(a) => commands::attack(&ctx, &a.input.inputs),
        Command::Evaluate(_) => commands::evaluate(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(outcome) => outcome.code(),
        Err(e) => {
            log::error!("{e}");
            Outcome::Failed.code()
        }
    }
}
