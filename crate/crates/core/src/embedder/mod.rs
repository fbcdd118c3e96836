//! Watermark embedding: invert, optimize the latent with the ring pinned,
//! regenerate, and blend back toward the original for a quality target.

pub mod adam;
pub mod config;
pub mod enhance;
pub mod loss;
pub mod optimize;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use config::{EmbedConfig, InitMode, OptimizerKind};
pub use enhance::{blend, enhance, GAMMA_TOLERANCE};
pub use loss::{reconstruction_loss, reconstruction_loss_with_grad, LossValue, PerceptualLoss};
pub use optimize::{optimize_latent, Optimized};

use crate::diffusion::DiffusionBackend;
use crate::error::Result;
use crate::evalkit::metrics::{psnr, ssim, QualityMetric, Ssim};
use crate::tensor::{Image, Latent};
use crate::watermark::WatermarkKey;

/// Starting latent for optimization.
pub fn init_latent(x0: &Image, backend: &DiffusionBackend, steps: usize, mode: InitMode) -> Result<Latent> {
    match mode {
        InitMode::Inversion => backend.image_to_noise(x0, steps),
        InitMode::Random { seed } => {
            backend.image_geometry().ensure_eq(&x0.geometry())?;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            Ok(Latent::from_fn(backend.latent_geometry(), |_, _, _| rng.sample(StandardNormal)))
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbedResult {
    /// `x̄_0`.
    pub watermarked: Image,
    /// `x̂_0 = clamp(G(Z_T* ⊕ W))`.
    pub generated: Image,
    /// `Z_T*` before injection.
    pub latent: Latent,
    pub injected: Latent,
    pub gamma: f64,
    pub iterations: usize,
    pub loss: LossValue,
    pub trace: Vec<LossValue>,
    /// Imaginary residue discarded when injecting.
    pub residue: f64,
    pub ssim: f64,
    pub psnr: f64,
}

/// Serializable per-image record of an embedding run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub gamma: f64,
    pub iterations: usize,
    pub ssim: f64,
    pub psnr: f64,
    pub loss: LossValue,
    pub trace: Vec<LossValue>,
    pub residue: f64,
}

impl EmbedResult {
    pub fn summary(&self) -> EmbedSummary {
        EmbedSummary {
            gamma: self.gamma,
            iterations: self.iterations,
            ssim: self.ssim,
            psnr: self.psnr,
            loss: self.loss,
            trace: self.trace.clone(),
            residue: self.residue,
        }
    }
}

/// Embedding front end holding the backend, configuration and optional
/// providers. Shared read-only across threads.
pub struct Embedder<'a> {
    backend: &'a DiffusionBackend,
    config: EmbedConfig,
    perceptual: Option<&'a dyn PerceptualLoss>,
    metric: &'a dyn QualityMetric,
}

impl<'a> Embedder<'a> {
    pub fn new(backend: &'a DiffusionBackend, config: EmbedConfig) -> Self {
        Self { backend, config, perceptual: None, metric: &Ssim }
    }

    pub fn with_perceptual(mut self, p: &'a dyn PerceptualLoss) -> Self {
        self.perceptual = Some(p);
        self
    }

    pub fn with_metric(mut self, m: &'a dyn QualityMetric) -> Self {
        self.metric = m;
        self
    }

    pub fn config(&self) -> &EmbedConfig {
        &self.config
    }

    pub fn embed(&self, x0: &Image, key: &WatermarkKey) -> Result<EmbedResult> {
        let cfg = &self.config;
        cfg.validate()?;
        key.validate()?;
        x0.check_range()?;
        let init = init_latent(x0, self.backend, cfg.steps, cfg.init)?;
        let opt = optimize_latent(&init, key, x0, self.backend, cfg, self.perceptual)?;
        let generated = opt.generated.clamped();
        let (watermarked, gamma) = enhance(x0, &generated, cfg.ssim_threshold, self.metric)?;
        Ok(EmbedResult {
            ssim: ssim(x0, &watermarked)?,
            psnr: psnr(x0, &watermarked)?,
            watermarked,
            generated,
            latent: opt.latent,
            injected: opt.injected,
            gamma,
            iterations: opt.iterations,
            loss: *opt.trace.last().expect("at least one evaluation"),
            trace: opt.trace,
            residue: opt.residue,
        })
    }
}

/// Embeds with the default SSIM metric and no perceptual provider.
pub fn embed(x0: &Image, key: &WatermarkKey, backend: &DiffusionBackend, config: &EmbedConfig) -> Result<EmbedResult> {
    Embedder::new(backend, config.clone()).embed(x0, key)
}
