use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::watermark::InjectionMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Adam {
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
    Sgd,
}

fn beta1() -> f64 {
    0.9
}

fn beta2() -> f64 {
    0.999
}

fn adam_eps() -> f64 {
    1e-8
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: beta1(), beta2: beta2(), eps: adam_eps() }
    }
}

/// How the latent is initialized before optimization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitMode {
    /// DDIM inversion of the input image.
    #[default]
    Inversion,
    /// Standard normal latent from a seeded generator.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub lambda_ssim: f64,
    pub lambda_perceptual: f64,
    pub max_iterations: usize,
    pub learning_rate: f64,
    /// Stop once SSIM of the regenerated image reaches this level.
    pub early_exit_ssim: Option<f64>,
    /// Target SSIM `s*` of the adaptive enhancement.
    pub ssim_threshold: f64,
    pub steps: usize,
    pub injection: InjectionMode,
    pub optimizer: OptimizerKind,
    pub init: InitMode,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            lambda_ssim: 0.1,
            lambda_perceptual: 0.01,
            max_iterations: 100,
            learning_rate: 0.01,
            early_exit_ssim: Some(0.8),
            ssim_threshold: 0.92,
            steps: 50,
            injection: InjectionMode::Fourier,
            optimizer: OptimizerKind::default(),
            init: InitMode::Inversion,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.lambda_ssim >= 0.0) || !(self.lambda_perceptual >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if !(self.ssim_threshold > 0.0 && self.ssim_threshold <= 1.0) {
            return bad(format!("s* = {} outside (0, 1]", self.ssim_threshold));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        if let Some(e) = self.early_exit_ssim {
            if !(e > 0.0 && e <= 1.0) {
                return bad(format!("early-exit SSIM {e} outside (0, 1]"));
            }
        }
        Ok(())
    }
}
