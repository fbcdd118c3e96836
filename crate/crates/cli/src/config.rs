//! Run configuration: defaults, then a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use ringmark::attacks::{AttackSpec, PipelineRef};
use ringmark::detector::DetectConfig;
use ringmark::diffusion::BackendConfig;
use ringmark::embedder::EmbedConfig;
use ringmark::evalkit::corpus::CorpusSpec;
use ringmark::evalkit::{config_hash, SweepGrid};
use ringmark::io::BitDepth;
use ringmark::Exec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const OUTPUT_DIR_ENV: &str = "RINGMARK_OUTPUT_DIR";
pub const CACHE_DIR_ENV: &str = "RINGMARK_CACHE_DIR";
const DEFAULT_OUTPUT_DIR: &str = "ringmark-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeygenConfig {
    pub radius: usize,
    /// Latent channel; negative values count from the end.
    pub channel: i64,
}

impl Default for KeygenConfig {
    fn default() -> Self {
        Self { radius: 10, channel: -1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub grid: SweepGrid,
    pub thresholds: Vec<f64>,
    /// Generated images used when no corpus glob is given.
    pub toy_corpus: CorpusSpec,
    pub toy_pristine: CorpusSpec,
    pub report_stem: String,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            grid: SweepGrid::default(),
            thresholds: vec![0.90, 0.95, 0.99],
            toy_corpus: CorpusSpec::default(),
            toy_pristine: CorpusSpec::default(),
            report_stem: "evaluation".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub backend: BackendConfig,
    pub key: Option<PathBuf>,
    pub keygen: KeygenConfig,
    pub embed: EmbedConfig,
    pub detect: DetectConfig,
    pub attacks: Vec<PipelineRef>,
    /// Glob of watermarking inputs.
    pub corpus: Option<String>,
    /// Glob of never-watermarked images for false-positive estimates.
    pub pristine: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub bit_depth: BitDepth,
    pub rotation_step: Option<f64>,
    pub toy_adapters: bool,
    pub evaluate: EvaluateConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|source| CliError::Config { path: path.to_path_buf(), source })
    }

    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        c.detect.exec = Exec::default();
        c
    }

    /// Hash of the settings that can change results: thread mode and output
    /// location are left out.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.normalized();
        c.output_dir = None;
        Ok(config_hash(&c)?)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn key_path(&self) -> Result<&Path> {
        self.key.as_deref().ok_or_else(|| CliError::Usage("no key file given (--key or `key` in the config)".into()))
    }
}

pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)
}

/// Parses `name`, `name:k=v,k=v` or stages joined by `+`.
pub fn parse_pipeline(s: &str) -> Result<PipelineRef> {
    let stages: Vec<&str> = s.split('+').map(str::trim).collect();
    if let [only] = stages.as_slice() {
        if !only.contains(':') {
            if only.is_empty() {
                return Err(CliError::Usage("empty attack".into()));
            }
            return Ok(PipelineRef::Named(only.to_string()));
        }
    }
    stages.iter().map(|st| parse_stage(st)).collect::<Result<_>>().map(PipelineRef::Stages)
}

fn parse_stage(s: &str) -> Result<AttackSpec> {
    let (name, args) = s.split_once(':').unwrap_or((s, ""));
    if name.is_empty() {
        return Err(CliError::Usage(format!("attack `{s}` has no name")));
    }
    let mut spec = AttackSpec::new(name);
    for kv in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("attack parameter `{kv}` is not k=v")))?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("attack parameter `{kv}` is not numeric")))?;
        spec = spec.with(k.trim(), v);
    }
    Ok(spec)
}
