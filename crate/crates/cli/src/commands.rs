use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use log::{error, info, warn};
use ringmark::attacks::{apply_pipeline, AttackContext, AttackRegistry};
use ringmark::detector::{DetectionResult, Detector};
use ringmark::diffusion::{build_backend, DiffusionBackend};
use ringmark::embedder::{EmbedSummary, Embedder};
use ringmark::evalkit::corpus::{pristine_corpus, toy_corpus};
use ringmark::evalkit::{run_sweep, EmbedCache, SweepConfig, SweepInputs};
use ringmark::exec::{map_slice, split_seed};
use ringmark::io::{ensure_lossless, load_image, save_png_tagged};
use ringmark::watermark::{generate_key, WatermarkKey};
use ringmark::{Exec, Geometry, Image, VERSION};
use serde::Serialize;

use crate::config::{cache_dir, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotDetected,
    Failed,
}

impl Outcome {
    pub fn code(self) -> ExitCode {
        match self {
            Outcome::Success => ExitCode::SUCCESS,
            Outcome::NotDetected => ExitCode::from(1),
            Outcome::Failed => ExitCode::from(2),
        }
    }
}

pub struct Context {
    pub cfg: RunConfig,
    pub hash: String,
    pub exec: Exec,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn new(cfg: RunConfig, exec: Exec) -> Result<Self> {
        let hash = cfg.hash()?;
        let out_dir = cfg.output_dir();
        Ok(Self { cfg, hash, exec, out_dir })
    }

    fn backend(&self) -> Result<DiffusionBackend> {
        Ok(build_backend(&self.cfg.backend)?)
    }

    fn key(&self) -> Result<WatermarkKey> {
        Ok(WatermarkKey::load(self.cfg.key_path()?)?)
    }

    fn tags<'a>(&'a self, extra: &[(&'a str, &'a str)]) -> Vec<(&'a str, &'a str)> {
        let mut t = vec![("config_hash", self.hash.as_str()), ("version", VERSION)];
        t.extend_from_slice(extra);
        t
    }

    fn save(&self, x: &Image, path: &Path, extra: &[(&str, &str)]) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        Ok(save_png_tagged(x, path, self.cfg.bit_depth, &self.tags(extra))?)
    }

    fn write_run_config(&self) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            config_hash: &'a str,
            version: &'a str,
            config: RunConfig,
        }
        let doc = Doc { config_hash: &self.hash, version: VERSION, config: self.cfg.normalized() };
        write_json(&self.out_dir.join("run_config.json"), &doc)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Explicit paths, else the config glob, in sorted order.
fn input_paths(explicit: &[PathBuf], corpus: Option<&str>) -> Result<Vec<PathBuf>> {
    let paths = if !explicit.is_empty() {
        explicit.to_vec()
    } else if let Some(pattern) = corpus {
        let mut v: Vec<PathBuf> = glob::glob(pattern)?.filter_map(|p| p.ok()).filter(|p| p.is_file()).collect();
        v.sort();
        v
    } else {
        return Err(CliError::Usage("no input images (give paths or --corpus GLOB)".into()));
    };
    if paths.is_empty() {
        return Err(CliError::Usage(format!("corpus `{}` matched no files", corpus.unwrap_or_default())));
    }
    Ok(paths)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn unique_stems(paths: &[PathBuf]) -> Result<Vec<String>> {
    let stems: Vec<String> = paths.iter().map(|p| stem(p)).collect();
    let mut seen = BTreeSet::new();
    for s in &stems {
        if !seen.insert(s) {
            return Err(CliError::Usage(format!("two inputs share the file name `{s}`")));
        }
    }
    Ok(stems)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn refuse_overwrite(inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    for o in outputs {
        if let Some(i) = inputs.iter().find(|i| same_file(i, o)) {
            return Err(CliError::Usage(format!("output {} would overwrite input {}", o.display(), i.display())));
        }
    }
    Ok(())
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

pub fn keygen(ctx: &Context, geometry: Option<Geometry>, out: Option<&Path>) -> Result<Outcome> {
    let k = &ctx.cfg.keygen;
    let key = match geometry {
        Some(g) => generate_key(ctx.cfg.seed, k.radius, k.channel, g)?,
        None => {
            let backend = ctx.backend()?;
            generate_key(ctx.cfg.seed, k.radius, k.channel, backend.latent_geometry())?.with_backend(backend.id())
        }
    };
    let path = match (out, &ctx.cfg.key) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => ctx.out_dir.join("key.json"),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    key.save(&path)?;
    info!("{} ring values, radius {}, channel {}", key.ring_values.len(), key.radius, key.channel);
    println!("{}", path.display());
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct EmbedSidecar<'a> {
    input: String,
    output: String,
    config_hash: &'a str,
    version: &'a str,
    backend: &'a str,
    key_seed: u64,
    #[serde(flatten)]
    summary: EmbedSummary,
}

enum Source {
    File(PathBuf),
    Generated(Image, PathBuf),
}

pub fn embed(ctx: &Context, inputs: &[PathBuf], toy: bool, output: Option<&Path>) -> Result<Outcome> {
    let backend = ctx.backend()?;
    let key = ctx.key()?;
    let items: Vec<(String, Source)> = if toy {
        let images = toy_corpus(&backend, &ctx.cfg.evaluate.toy_corpus, ctx.exec)?;
        let mut v = Vec::with_capacity(images.len());
        for (i, x) in images.into_iter().enumerate() {
            let name = format!("toy_{i:03}");
            let orig = ctx.out_dir.join("original").join(format!("{name}.png"));
            ctx.save(&x, &orig, &[])?;
            v.push((name, Source::Generated(x, orig)));
        }
        v
    } else {
        let paths = input_paths(inputs, ctx.cfg.corpus.as_deref())?;
        let stems = unique_stems(&paths)?;
        stems.into_iter().zip(paths).map(|(s, p)| (s, Source::File(p))).collect()
    };
    if output.is_some() && items.len() != 1 {
        return Err(CliError::Usage("--output needs exactly one input".into()));
    }
    let outputs: Vec<PathBuf> = items
        .iter()
        .map(|(name, _)| output.map(Path::to_path_buf).unwrap_or_else(|| ctx.out_dir.join(format!("{name}.png"))))
        .collect();
    for o in &outputs {
        ensure_lossless(o)?;
    }
    let sources: Vec<PathBuf> = items
        .iter()
        .map(|(_, s)| match s {
            Source::File(p) | Source::Generated(_, p) => p.clone(),
        })
        .collect();
    refuse_overwrite(&sources, &outputs)?;

    let embedder = Embedder::new(&backend, ctx.cfg.embed.clone());
    let jobs: Vec<usize> = (0..items.len()).collect();
    let results = map_slice(ctx.exec, &jobs, |&i| -> Result<EmbedSummary> {
        let x = match &items[i].1 {
            Source::File(p) => load_image(p)?,
            Source::Generated(x, _) => x.clone(),
        };
        let r = embedder.embed(&x, &key)?;
        ctx.save(&r.watermarked, &outputs[i], &[])?;
        let summary = r.summary();
        let sidecar = EmbedSidecar {
            input: sources[i].display().to_string(),
            output: outputs[i].display().to_string(),
            config_hash: &ctx.hash,
            version: VERSION,
            backend: backend.id(),
            key_seed: key.seed,
            summary: summary.clone(),
        };
        write_json(&outputs[i].with_extension("json"), &sidecar)?;
        Ok(summary)
    });
    let mut failed = 0;
    for ((name, _), (r, out)) in items.iter().zip(results.iter().zip(&outputs)) {
        match r {
            Ok(s) => {
                info!("{name}: γ={} iterations={} ssim={:.4}", s.gamma, s.iterations, s.ssim);
                println!("{}", out.display());
            }
            Err(e) => {
                error!("{name}: {e}");
                failed += 1;
            }
        }
    }
    ctx.write_run_config()?;
    if failed > 0 {
        warn!("{failed} of {} inputs failed", items.len());
        return Ok(Outcome::Failed);
    }
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct DetectLine<'a> {
    image: String,
    config_hash: &'a str,
    version: &'a str,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    result: Option<DetectionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn detect(ctx: &Context, inputs: &[PathBuf], report: Option<&Path>) -> Result<Outcome> {
    let backend = ctx.backend()?;
    let key = ctx.key()?;
    let mut dc = ctx.cfg.detect;
    dc.exec = ctx.exec;
    let detector = Detector::new(&backend, &key, dc)?;
    let paths = input_paths(inputs, ctx.cfg.corpus.as_deref())?;
    let results = map_slice(ctx.exec, &paths, |p| -> Result<DetectionResult> {
        let x = load_image(p)?;
        Ok(match ctx.cfg.rotation_step {
            Some(step) => detector.detect_with_rotation_correction(&x, step)?,
            None => detector.detect_lenient(&x)?,
        })
    });
    let mut lines = Vec::with_capacity(paths.len());
    let mut outcome = Outcome::Success;
    for (p, r) in paths.iter().zip(results) {
        let (result, err) = match r {
            Ok(r) => {
                if !r.detected && outcome == Outcome::Success {
                    outcome = Outcome::NotDetected;
                }
                (Some(r), None)
            }
            Err(e) => {
                error!("{}: {e}", p.display());
                outcome = Outcome::Failed;
                (None, Some(e.to_string()))
            }
        };
        let line = DetectLine { image: p.display().to_string(), config_hash: &ctx.hash, version: VERSION, result, error: err };
        println!("{}", serde_json::to_string(&line)?);
        lines.push(line);
    }
    if let Some(path) = report {
        write_json(path, &lines)?;
    }
    Ok(outcome)
}

pub fn attack(ctx: &Context, inputs: &[PathBuf]) -> Result<Outcome> {
    if ctx.cfg.attacks.is_empty() {
        return Err(CliError::Usage("no attack given (--attack or `attacks` in the config)".into()));
    }
    let backend = ctx.backend()?;
    let registry = if ctx.cfg.toy_adapters { AttackRegistry::with_toy_adapters() } else { AttackRegistry::with_builtins() };
    let paths = input_paths(inputs, ctx.cfg.corpus.as_deref())?;
    let stems = unique_stems(&paths)?;
    let pipelines = ctx
        .cfg
        .attacks
        .iter()
        .map(|p| Ok((p.label(), p.resolve()?)))
        .collect::<Result<Vec<_>>>()?;
    let mut failed = 0;
    for (pi, (label, specs)) in pipelines.iter().enumerate() {
        let dir = ctx.out_dir.join(sanitize(label));
        let outputs: Vec<PathBuf> = stems.iter().map(|s| dir.join(format!("{s}.png"))).collect();
        refuse_overwrite(&paths, &outputs)?;
        let jobs: Vec<usize> = (0..paths.len()).collect();
        let results = map_slice(ctx.exec, &jobs, |&i| -> Result<()> {
            let x = load_image(&paths[i])?;
            let seed = split_seed(split_seed(ctx.cfg.seed, pi as u64), i as u64);
            let actx = AttackContext::new(seed).with_backend(&backend);
            let y = apply_pipeline(&x, specs, &registry, &actx)?;
            ctx.save(&y, &outputs[i], &[("attack", label.as_str())])
        });
        for ((p, out), r) in paths.iter().zip(&outputs).zip(results) {
            match r {
                Ok(()) => println!("{}", out.display()),
                Err(e) => {
                    error!("{label} on {}: {e}", p.display());
                    failed += 1;
                }
            }
        }
    }
    ctx.write_run_config()?;
    Ok(if failed > 0 { Outcome::Failed } else { Outcome::Success })
}

fn load_named(pattern: &str) -> Result<Vec<(String, Image)>> {
    let paths = input_paths(&[], Some(pattern))?;
    let stems = unique_stems(&paths)?;
    stems.into_iter().zip(&paths).map(|(s, p)| Ok((s, load_image(p)?))).collect()
}

fn named(prefix: &str, images: Vec<Image>) -> Vec<(String, Image)> {
    images.into_iter().enumerate().map(|(i, x)| (format!("{prefix}_{i:03}"), x)).collect()
}

pub fn evaluate(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let backend = ctx.backend()?;
    let key = ctx.key()?;
    let registry = if cfg.toy_adapters { AttackRegistry::with_toy_adapters() } else { AttackRegistry::with_builtins() };
    let images = match &cfg.corpus {
        Some(g) => load_named(g)?,
        None => named("toy", toy_corpus(&backend, &cfg.evaluate.toy_corpus, ctx.exec)?),
    };
    let pristine = match &cfg.pristine {
        Some(g) => load_named(g)?,
        None => named("pristine", pristine_corpus(&backend, &cfg.evaluate.toy_pristine, ctx.exec)?),
    };
    let cache = match cache_dir() {
        Some(d) => EmbedCache::on_disk(d),
        None => EmbedCache::in_memory(),
    };
    let mut detect = cfg.detect;
    detect.exec = ctx.exec;
    let sweep = SweepConfig {
        embed: cfg.embed.clone(),
        grid: cfg.evaluate.grid.clone(),
        detect,
        thresholds: cfg.evaluate.thresholds.clone(),
        attacks: cfg.attacks.clone(),
        rotation_step: cfg.rotation_step,
        seed: cfg.seed,
    };
    let inputs = SweepInputs {
        backend: &backend,
        key: &key,
        registry: &registry,
        images: &images,
        pristine: &pristine,
        cache: &cache,
        exec: ctx.exec,
    };
    let mut out = run_sweep(&sweep, &inputs)?;
    out.report.provenance.config_hash = ctx.hash.clone();
    let stem = &cfg.evaluate.report_stem;
    out.report.write(&ctx.out_dir, stem)?;

    #[derive(Serialize)]
    struct Embedding<'a> {
        config: &'a str,
        image: &'a str,
        #[serde(flatten)]
        summary: &'a EmbedSummary,
    }
    #[derive(Serialize)]
    struct Extras<'a, T> {
        config_hash: &'a str,
        version: &'a str,
        items: T,
    }
    let embeddings: Vec<Embedding> =
        out.embeddings.iter().map(|(c, i, s)| Embedding { config: c, image: i, summary: s }).collect();
    write_json(
        &ctx.out_dir.join(format!("{stem}_embeddings.json")),
        &Extras { config_hash: &ctx.hash, version: VERSION, items: embeddings },
    )?;
    if !out.errors.is_empty() {
        for e in &out.errors {
            warn!("{} / {} / {}: {}", e.config, e.attack, e.image, e.message);
        }
        write_json(
            &ctx.out_dir.join(format!("{stem}_errors.json")),
            &Extras { config_hash: &ctx.hash, version: VERSION, items: &out.errors },
        )?;
    }
    ctx.write_run_config()?;
    print!("{}", out.report.wdr_table_csv()?);
    Ok(Outcome::Success)
}
