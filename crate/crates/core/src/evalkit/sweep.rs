//! Embed → attack → detect → aggregate over a configuration grid.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{apply_pipeline, AttackContext, AttackRegistry, PipelineRef};
use crate::detector::{DetectConfig, DetectionResult, Detector};
use crate::diffusion::DiffusionBackend;
use crate::embedder::{embed, EmbedConfig, EmbedSummary};
use crate::error::{Error, Result};
use crate::evalkit::metrics::{psnr, ssim};
use crate::evalkit::report::{aggregate, config_hash, EvalReport, Provenance, Record, NO_ATTACK};
use crate::exec::{self, split_seed, Exec};
use crate::tensor::{Geometry, Image, Tensor3};
use crate::watermark::{InjectionMode, WatermarkKey};

/// Axes of the embedding grid; every combination is one watermarker
/// configuration. Empty axes fall back to the base configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub ssim_threshold: Vec<f64>,
    pub steps: Vec<usize>,
    pub injection: Vec<InjectionMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub embed: EmbedConfig,
    pub grid: SweepGrid,
    /// Detection settings; `steps` and `domain` follow each embedding
    /// configuration.
    pub detect: DetectConfig,
    /// Thresholds `p*` applied at aggregation time.
    pub thresholds: Vec<f64>,
    pub attacks: Vec<PipelineRef>,
    /// Detect with rotation correction at this step when set.
    pub rotation_step: Option<f64>,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            embed: EmbedConfig::default(),
            grid: SweepGrid::default(),
            detect: DetectConfig::default(),
            thresholds: vec![0.90, 0.95, 0.99],
            attacks: Vec::new(),
            rotation_step: None,
            seed: 0,
        }
    }
}

/// One watermarker configuration of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub embed: EmbedConfig,
    pub detect: DetectConfig,
}

impl SweepConfig {
    pub fn variants(&self) -> Vec<Variant> {
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let ss = or(&self.grid.ssim_threshold, self.embed.ssim_threshold);
        let steps = if self.grid.steps.is_empty() { vec![self.embed.steps] } else { self.grid.steps.clone() };
        let inj = if self.grid.injection.is_empty() { vec![self.embed.injection] } else { self.grid.injection.clone() };
        let mut out = Vec::new();
        for &s in &ss {
            for &t in &steps {
                for &m in &inj {
                    let embed = EmbedConfig { ssim_threshold: s, steps: t, injection: m, ..self.embed.clone() };
                    let detect = DetectConfig { steps: t, domain: m, ..self.detect };
                    let mode = match m {
                        InjectionMode::Fourier => "fourier",
                        InjectionMode::Spatial => "spatial",
                    };
                    out.push(Variant { label: format!("s{s}_steps{t}_{mode}"), embed, detect });
                }
            }
        }
        out
    }
}

/// Cached outcome of embedding one image under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedEmbedding {
    pub geometry: Geometry,
    pub watermarked: Vec<f64>,
    pub summary: EmbedSummary,
}

impl CachedEmbedding {
    pub fn image(&self) -> Result<Image> {
        Ok(Image(Tensor3::from_vec(self.geometry, self.watermarked.clone())?))
    }
}

/// Embedding cache keyed by a digest of (backend, key, config, image).
/// Optionally mirrored to a directory; stored values round-trip exactly.
#[derive(Debug, Default)]
pub struct EmbedCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, CachedEmbedding>>,
}

impl EmbedCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: PathBuf) -> Self {
        Self { dir: Some(dir), memory: Mutex::default() }
    }

    pub fn len(&self) -> usize {
        self.memory.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn digest(backend: &DiffusionBackend, key: &WatermarkKey, cfg: &EmbedConfig, x: &Image) -> Result<String> {
        let mut h = Sha256::new();
        h.update(backend.id().as_bytes());
        h.update(format!("{backend:?}").as_bytes());
        h.update(key.to_json()?.as_bytes());
        h.update(serde_json::to_vec(cfg)?);
        for v in x.as_slice() {
            h.update(v.to_le_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn get_or_embed(
        &self,
        backend: &DiffusionBackend,
        key: &WatermarkKey,
        cfg: &EmbedConfig,
        x: &Image,
    ) -> Result<CachedEmbedding> {
        let d = Self::digest(backend, key, cfg, x)?;
        if let Some(hit) = self.memory.lock().expect("cache lock").get(&d) {
            return Ok(hit.clone());
        }
        let path = self.dir.as_ref().map(|dir| dir.join(format!("{d}.json")));
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            let hit: CachedEmbedding = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            self.memory.lock().expect("cache lock").insert(d, hit.clone());
            return Ok(hit);
        }
        let r = embed(x, key, backend, cfg)?;
        let entry = CachedEmbedding {
            geometry: r.watermarked.geometry(),
            watermarked: r.watermarked.as_slice().to_vec(),
            summary: r.summary(),
        };
        if let Some(p) = path {
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&p, serde_json::to_string(&entry)?)?;
        }
        self.memory.lock().expect("cache lock").insert(d, entry.clone());
        Ok(entry)
    }
}

/// A failure confined to one image of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub config: String,
    pub attack: String,
    pub image: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub report: EvalReport,
    pub errors: Vec<CellError>,
    pub embeddings: Vec<(String, String, EmbedSummary)>,
}

pub struct SweepInputs<'a> {
    pub backend: &'a DiffusionBackend,
    pub key: &'a WatermarkKey,
    pub registry: &'a AttackRegistry,
    /// `(id, image)` to be watermarked.
    pub images: &'a [(String, Image)],
    /// `(id, image)` never watermarked; detected pre-attack for FPR.
    pub pristine: &'a [(String, Image)],
    pub cache: &'a EmbedCache,
    pub exec: Exec,
}

fn record(
    image: &str,
    watermarked: bool,
    config: &str,
    attack: &str,
    quality: Option<(f64, f64)>,
    r: &DetectionResult,
) -> Record {
    Record {
        image: image.to_string(),
        watermarked,
        config: config.to_string(),
        attack: attack.to_string(),
        psnr: quality.map(|q| q.0),
        ssim: quality.map(|q| q.1),
        perceptual: None,
        score: r.score,
        p_value: r.p_value,
        degenerate: r.degenerate,
        rotation_angle: r.rotation_angle,
    }
}

fn detect_one(d: &Detector, x: &Image, rotation_step: Option<f64>) -> Result<DetectionResult> {
    match rotation_step {
        Some(s) => d.detect_with_rotation_correction(x, s),
        None => d.detect_lenient(x),
    }
}

/// Runs every (configuration, attack) cell. Per-image failures are recorded
/// and skipped; the report is assembled sequentially in grid order.
pub fn run_sweep(cfg: &SweepConfig, inputs: &SweepInputs) -> Result<SweepOutput> {
    if inputs.images.is_empty() && inputs.pristine.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let hash = config_hash(cfg)?;
    let variants = cfg.variants();
    let pipelines: Vec<(String, Vec<crate::attacks::AttackSpec>)> =
        cfg.attacks.iter().map(|p| Ok((p.label(), p.resolve()?))).collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut embeddings = Vec::new();
    let n = inputs.images.len();

    for v in &variants {
        let detector = Detector::new(inputs.backend, inputs.key, v.detect)?;
        let embedded = exec::map_range(inputs.exec, n, |i| {
            inputs.cache.get_or_embed(inputs.backend, inputs.key, &v.embed, &inputs.images[i].1)
        });
        let mut ready: Vec<Option<(Image, Image)>> = Vec::with_capacity(n);
        for (i, e) in embedded.into_iter().enumerate() {
            let id = &inputs.images[i].0;
            match e.and_then(|c| Ok((c.image()?, c.summary))) {
                Ok((img, summary)) => {
                    embeddings.push((v.label.clone(), id.clone(), summary));
                    ready.push(Some((inputs.images[i].1.clone(), img)));
                }
                Err(e) => {
                    errors.push(CellError {
                        config: v.label.clone(),
                        attack: NO_ATTACK.into(),
                        image: id.clone(),
                        message: e.to_string(),
                    });
                    ready.push(None);
                }
            }
        }

        let mut cells: Vec<(String, Option<&[crate::attacks::AttackSpec]>)> = vec![(NO_ATTACK.into(), None)];
        cells.extend(pipelines.iter().map(|(l, s)| (l.clone(), Some(s.as_slice()))));
        for (ci, (label, specs)) in cells.iter().enumerate() {
            let jobs: Vec<usize> = (0..n).filter(|&i| ready[i].is_some()).collect();
            let out = exec::map_slice(inputs.exec, &jobs, |&i| -> Result<Record> {
                let (orig, wm) = ready[i].as_ref().expect("filtered");
                let (reference, test) = match specs {
                    None => (orig.clone(), wm.clone()),
                    Some(s) => {
                        let seed = split_seed(split_seed(cfg.seed, ci as u64), i as u64);
                        let ctx = AttackContext::new(seed).with_backend(inputs.backend);
                        (wm.clone(), apply_pipeline(wm, s, inputs.registry, &ctx)?)
                    }
                };
                let q = (psnr(&reference, &test)?, ssim(&reference, &test)?);
                let r = detect_one(&detector, &test, cfg.rotation_step)?;
                Ok(record(&inputs.images[i].0, true, &v.label, label, Some(q), &r))
            });
            for (&i, r) in jobs.iter().zip(out) {
                match r {
                    Ok(rec) => records.push(rec),
                    Err(e) => errors.push(CellError {
                        config: v.label.clone(),
                        attack: label.clone(),
                        image: inputs.images[i].0.clone(),
                        message: e.to_string(),
                    }),
                }
            }
            if specs.is_none() {
                let out = exec::map_slice(inputs.exec, inputs.pristine, |(id, x)| {
                    detect_one(&detector, x, cfg.rotation_step).map(|r| record(id, false, &v.label, NO_ATTACK, None, &r))
                });
                for (p, r) in inputs.pristine.iter().zip(out) {
                    match r {
                        Ok(rec) => records.push(rec),
                        Err(e) => errors.push(CellError {
                            config: v.label.clone(),
                            attack: NO_ATTACK.into(),
                            image: p.0.clone(),
                            message: e.to_string(),
                        }),
                    }
                }
            }
        }
    }
    let provenance = Provenance {
        config_hash: hash,
        version: crate::VERSION.to_string(),
        backend: inputs.backend.id().to_string(),
        seed: cfg.seed,
    };
    let report = aggregate(&records, &cfg.thresholds, provenance)?;
    Ok(SweepOutput { report, errors, embeddings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackSpec;
    use crate::diffusion::{build_backend, BackendConfig};
    use crate::evalkit::corpus::{pristine_corpus, toy_corpus, CorpusSpec};
    use crate::watermark::generate_key;

    type Named = Vec<(String, Image)>;

    fn small() -> (DiffusionBackend, WatermarkKey, Named, Named) {
        let backend = build_backend(&BackendConfig::default().with_latent_size(16)).unwrap();
        let key = generate_key(3, 3, -1, backend.latent_geometry()).unwrap();
        let spec = CorpusSpec { count: 2, steps: 10, ..CorpusSpec::default() };
        let ids = |v: Vec<Image>, p: &str| v.into_iter().enumerate().map(|(i, x)| (format!("{p}{i}"), x)).collect();
        let imgs = ids(toy_corpus(&backend, &spec, Exec::Sequential).unwrap(), "img");
        let pris = ids(pristine_corpus(&backend, &spec, Exec::Sequential).unwrap(), "pristine");
        (backend, key, imgs, pris)
    }

    fn cfg() -> SweepConfig {
        SweepConfig {
            embed: EmbedConfig { max_iterations: 5, steps: 10, ..EmbedConfig::default() },
            grid: SweepGrid { ssim_threshold: vec![0.8, 0.95], ..SweepGrid::default() },
            attacks: vec![
                PipelineRef::Named("jpeg".into()),
                PipelineRef::Stages(vec![AttackSpec::new("brightness").with("factor", 3.0)]),
                PipelineRef::Named("bm3d".into()),
            ],
            ..SweepConfig::default()
        }
    }

    #[test]
    fn sweep_shape_cache_and_errors() {
        let (backend, key, imgs, pris) = small();
        let registry = AttackRegistry::with_builtins();
        let cache = EmbedCache::in_memory();
        let inputs = SweepInputs {
            backend: &backend,
            key: &key,
            registry: &registry,
            images: &imgs,
            pristine: &pris,
            cache: &cache,
            exec: Exec::Parallel,
        };
        let c = cfg();
        let a = run_sweep(&c, &inputs).unwrap();
        assert_eq!(cache.len(), 4);
        // 2 configs x (none + jpeg + brightness) x 3 thresholds; bm3d failed everywhere
        assert_eq!(a.report.cells.len(), 2 * 3 * 3);
        assert_eq!(a.errors.len(), 2 * 2);
        assert!(a.errors.iter().all(|e| e.attack == "bm3d" && e.message.contains("adapter")));
        for v in ["s0.8_steps10_fourier", "s0.95_steps10_fourier"] {
            let c = a.report.cell(v, NO_ATTACK, 0.9).unwrap();
            assert_eq!((c.watermarked, c.unwatermarked), (2, 2));
        }
        let hi = a.report.cell("s0.95_steps10_fourier", NO_ATTACK, 0.9).unwrap();
        assert!(hi.mean_ssim.unwrap() >= 0.95 - 1e-9);

        let fresh = EmbedCache::in_memory();
        let b = run_sweep(&c, &SweepInputs { cache: &fresh, exec: Exec::Sequential, ..inputs }).unwrap();
        assert_eq!(a.report, b.report);
        let again = run_sweep(&c, &inputs).unwrap();
        assert_eq!(again.report.records_csv().unwrap(), a.report.records_csv().unwrap());
    }

    #[test]
    fn disk_cache_round_trips() {
        let (backend, key, imgs, _) = small();
        let dir = tempfile::tempdir().unwrap();
        let cfg = EmbedConfig { max_iterations: 3, steps: 5, ..EmbedConfig::default() };
        let first = EmbedCache::on_disk(dir.path().to_path_buf()).get_or_embed(&backend, &key, &cfg, &imgs[0].1).unwrap();
        let second = EmbedCache::on_disk(dir.path().to_path_buf()).get_or_embed(&backend, &key, &cfg, &imgs[0].1).unwrap();
        assert_eq!(first, second);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
