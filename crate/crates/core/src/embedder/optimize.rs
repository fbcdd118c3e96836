use crate::diffusion::DiffusionBackend;
use crate::embedder::adam::Optimizer;
use crate::embedder::config::EmbedConfig;
use crate::embedder::loss::{reconstruction_loss_with_grad, LossValue, PerceptualLoss};
use crate::error::{Error, Result};
use crate::tensor::{Image, Latent};
use crate::watermark::{Injector, WatermarkKey};

/// Outcome of the latent optimization loop.
#[derive(Debug, Clone)]
pub struct Optimized {
    /// `Z_T*`, before injection.
    pub latent: Latent,
    /// `Z_T* ⊕ W`.
    pub injected: Latent,
    /// Unclamped `G(Z_T* ⊕ W)`.
    pub generated: Image,
    /// Gradient steps taken.
    pub iterations: usize,
    /// Loss after each evaluation; entry `i` precedes step `i`.
    pub trace: Vec<LossValue>,
    pub residue: f64,
}

/// Gradient descent on `Z_T` so that `G(Z_T ⊕ W)` reproduces `x0`. The
/// watermark is re-injected at every evaluation, so the masked content never
/// trains.
pub fn optimize_latent(
    init: &Latent,
    key: &WatermarkKey,
    x0: &Image,
    backend: &DiffusionBackend,
    cfg: &EmbedConfig,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<Optimized> {
    cfg.validate()?;
    backend.latent_geometry().ensure_eq(&init.geometry())?;
    backend.latent_geometry().ensure_eq(&key.latent_geometry)?;
    backend.image_geometry().ensure_eq(&x0.geometry())?;
    let injector = Injector::new(key, cfg.injection)?;
    let mut z = init.clone();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, z.as_slice().len());
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let inj = injector.apply(&z);
        let chain = backend.denoise_trace(&inj.latent, cfg.steps)?;
        let generated = backend.decode_latent(&chain.output)?;
        let (loss, grad_img) =
            reconstruction_loss_with_grad(x0, &generated, cfg.lambda_ssim, cfg.lambda_perceptual, perceptual)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: iterations });
        }
        trace.push(loss);
        let reached = cfg.early_exit_ssim.is_some_and(|level| loss.ssim_value() >= level);
        if reached || iterations == cfg.max_iterations {
            return Ok(Optimized {
                latent: z,
                injected: inj.latent,
                generated,
                iterations,
                trace,
                residue: inj.residue,
            });
        }
        let g_latent = backend.codec().decode_vjp(&chain.output, &grad_img);
        let g_noise = chain.vjp(backend.predictor(), &g_latent);
        let g = injector.vjp(&g_noise);
        if !g.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: iterations });
        }
        opt.step(z.as_mut_slice(), g.as_slice());
        iterations += 1;
    }
}
