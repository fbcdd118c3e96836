use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::ddim::{self, DenoiseTrace};
use crate::diffusion::schedule::{NoiseSchedule, ScheduleKind, Spacing};
use crate::diffusion::toy;
use crate::error::{Error, Result};
use crate::tensor::{Geometry, Image, Latent};

/// Noise estimate `ε_θ(x_t, t)` together with its vector-Jacobian product.
pub trait NoisePredictor: Send + Sync {
    fn predict(&self, x: &Latent, t: usize) -> Latent;

    /// `J_ε(x, t)ᵀ · upstream`.
    fn vjp(&self, x: &Latent, t: usize, upstream: &Latent) -> Latent;
}

/// Image ↔ latent autoencoder. `decode` must be differentiable.
pub trait LatentCodec: Send + Sync {
    fn image_geometry(&self) -> Geometry;
    fn latent_geometry(&self) -> Geometry;
    fn encode(&self, x: &Image) -> Latent;
    fn decode(&self, z: &Latent) -> Image;
    fn decode_vjp(&self, z: &Latent, upstream: &Image) -> Latent;

    /// Documented worst-case `‖decode(encode(x)) − x‖∞`, when the codec has one.
    fn reconstruction_tolerance(&self) -> Option<f64> {
        None
    }
}

/// Predictor, codec and schedule bundled under a registry identifier.
/// Immutable after construction and cheap to clone.
#[derive(Clone)]
pub struct DiffusionBackend {
    id: String,
    predictor: Arc<dyn NoisePredictor>,
    codec: Arc<dyn LatentCodec>,
    schedule: NoiseSchedule,
}

impl fmt::Debug for DiffusionBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionBackend")
            .field("id", &self.id)
            .field("latent", &self.latent_geometry())
            .field("image", &self.image_geometry())
            .field("T", &self.schedule.len())
            .finish()
    }
}

impl DiffusionBackend {
    pub fn new(
        id: impl Into<String>,
        predictor: Arc<dyn NoisePredictor>,
        codec: Arc<dyn LatentCodec>,
        schedule: NoiseSchedule,
    ) -> Self {
        Self { id: id.into(), predictor, codec, schedule }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn predictor(&self) -> &dyn NoisePredictor {
        self.predictor.as_ref()
    }

    pub fn codec(&self) -> &dyn LatentCodec {
        self.codec.as_ref()
    }

    pub fn latent_geometry(&self) -> Geometry {
        self.codec.latent_geometry()
    }

    pub fn image_geometry(&self) -> Geometry {
        self.codec.image_geometry()
    }

    pub fn encode_image(&self, x: &Image) -> Result<Latent> {
        self.image_geometry().ensure_eq(&x.geometry())?;
        x.check_range()?;
        Ok(self.codec.encode(x))
    }

    pub fn decode_latent(&self, z: &Latent) -> Result<Image> {
        self.latent_geometry().ensure_eq(&z.geometry())?;
        Ok(self.codec.decode(z))
    }

    pub fn ddim_denoise(&self, z: &Latent, steps: usize) -> Result<Latent> {
        let ts = self.checked_timesteps(z, steps)?;
        Ok(ddim::denoise_over(z, self.predictor(), &self.schedule, &ts))
    }

    pub fn ddim_invert(&self, z: &Latent, steps: usize) -> Result<Latent> {
        let ts = self.checked_timesteps(z, steps)?;
        Ok(ddim::invert_over(z, self.predictor(), &self.schedule, &ts))
    }

    /// Denoises along an explicit ascending timestep list.
    pub fn ddim_denoise_over(&self, z: &Latent, timesteps: &[usize]) -> Result<Latent> {
        self.latent_geometry().ensure_eq(&z.geometry())?;
        self.check_timesteps(timesteps)?;
        Ok(ddim::denoise_over(z, self.predictor(), &self.schedule, timesteps))
    }

    pub fn ddim_invert_over(&self, z: &Latent, timesteps: &[usize]) -> Result<Latent> {
        self.latent_geometry().ensure_eq(&z.geometry())?;
        self.check_timesteps(timesteps)?;
        Ok(ddim::invert_over(z, self.predictor(), &self.schedule, timesteps))
    }

    pub fn denoise_trace(&self, z: &Latent, steps: usize) -> Result<DenoiseTrace> {
        let ts = self.checked_timesteps(z, steps)?;
        Ok(DenoiseTrace::run(z, self.predictor(), &self.schedule, &ts))
    }

    /// `G'(x)`: encode then invert.
    pub fn image_to_noise(&self, x: &Image, steps: usize) -> Result<Latent> {
        let z0 = self.encode_image(x)?;
        self.ddim_invert(&z0, steps)
    }

    /// `G(z)`: denoise then decode.
    pub fn noise_to_image(&self, z: &Latent, steps: usize) -> Result<Image> {
        let z0 = self.ddim_denoise(z, steps)?;
        self.decode_latent(&z0)
    }

    fn checked_timesteps(&self, z: &Latent, steps: usize) -> Result<Vec<usize>> {
        self.latent_geometry().ensure_eq(&z.geometry())?;
        self.schedule.timesteps(steps)
    }

    fn check_timesteps(&self, ts: &[usize]) -> Result<()> {
        let ok = ts.windows(2).all(|w| w[0] < w[1])
            && ts.iter().all(|&t| t >= 1 && t <= self.schedule.len());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid timestep list {ts:?}")))
        }
    }
}

/// Declarative backend description, as found in run configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub id: String,
    #[serde(default = "default_timesteps")]
    pub timesteps: usize,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub spacing: Spacing,
    /// Latent height and width.
    #[serde(default = "default_latent_size")]
    pub latent_size: usize,
    /// Slope of the linear predictor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<toy::SpectralPrior>,
}

fn default_timesteps() -> usize {
    1000
}

fn default_latent_size() -> usize {
    64
}

impl BackendConfig {
    pub fn named(id: &str) -> Self {
        Self {
            id: id.to_string(),
            timesteps: default_timesteps(),
            schedule: ScheduleKind::default(),
            spacing: Spacing::default(),
            latent_size: default_latent_size(),
            coefficient: None,
            prior: None,
        }
    }

    pub fn with_latent_size(mut self, n: usize) -> Self {
        self.latent_size = n;
        self
    }

    pub fn with_timesteps(mut self, t: usize) -> Self {
        self.timesteps = t;
        self
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::new(self.timesteps, &self.schedule)?.with_spacing(self.spacing))
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::named(toy::SPECTRAL_ID)
    }
}

type Builder = Box<dyn Fn(&BackendConfig) -> Result<DiffusionBackend> + Send + Sync>;

/// Backend constructors keyed by identifier. Adapters for real models
/// register themselves next to the built-in toys.
pub struct BackendRegistry {
    builders: BTreeMap<String, Builder>,
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self { builders: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(toy::ZERO_ID, toy::zero_backend);
        r.register(toy::LINEAR_ID, toy::linear_backend);
        r.register(toy::SPECTRAL_ID, toy::spectral_backend);
        r
    }

    pub fn register<F>(&mut self, id: &str, build: F)
    where
        F: Fn(&BackendConfig) -> Result<DiffusionBackend> + Send + Sync + 'static,
    {
        self.builders.insert(id.to_string(), Box::new(build));
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, cfg: &BackendConfig) -> Result<DiffusionBackend> {
        let build = self
            .builders
            .get(&cfg.id)
            .ok_or_else(|| Error::UnknownBackend(cfg.id.clone()))?;
        build(cfg)
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// Builds a backend from the built-in registry.
pub fn build_backend(cfg: &BackendConfig) -> Result<DiffusionBackend> {
    BackendRegistry::with_builtins().build(cfg)
}
