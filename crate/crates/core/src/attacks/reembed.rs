//! Overwriting an existing watermark by embedding a second one, under
//! varying attacker knowledge of the owner's backend and configuration.

use serde::{Deserialize, Serialize};

use crate::diffusion::toy::{SpectralPrior, SPECTRAL_ID};
use crate::diffusion::{build_backend, BackendConfig};
use crate::embedder::{EmbedConfig, Embedder};
use crate::error::{Error, Result};
use crate::tensor::Image;
use crate::watermark::{generate_key, WatermarkKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKnowledge {
    /// Neither the backend weights nor the ring configuration.
    None,
    /// Same backend, different injection channel.
    WeightsOnly,
    /// Different backend, same channel and radius.
    ConfigOnly,
    /// Same backend, channel and radius.
    Full,
}

impl BackendKnowledge {
    pub const ALL: [BackendKnowledge; 4] =
        [BackendKnowledge::None, BackendKnowledge::WeightsOnly, BackendKnowledge::ConfigOnly, BackendKnowledge::Full];

    pub fn knows_weights(self) -> bool {
        matches!(self, BackendKnowledge::WeightsOnly | BackendKnowledge::Full)
    }

    pub fn knows_config(self) -> bool {
        matches!(self, BackendKnowledge::ConfigOnly | BackendKnowledge::Full)
    }
}

/// What the attacker embeds with.
#[derive(Debug, Clone)]
pub struct ReembedPlan {
    pub key: WatermarkKey,
    pub backend: BackendConfig,
}

/// Stand-in for "other weights": the spectral toy with a reshaped prior.
fn surrogate_backend(owner: &BackendConfig) -> BackendConfig {
    let base = owner.prior.clone().unwrap_or_default();
    let prior = SpectralPrior {
        std: base.std.iter().map(|s| 0.8 * s).collect(),
        exponent: base.exponent * 1.4,
        corner: base.corner * 0.7,
    };
    BackendConfig { id: SPECTRAL_ID.to_string(), prior: Some(prior), coefficient: None, ..owner.clone() }
}

pub fn reembed_plan(
    knowledge: BackendKnowledge,
    owner_key: &WatermarkKey,
    owner_backend: &BackendConfig,
    attacker_seed: u64,
) -> Result<ReembedPlan> {
    let g = owner_key.latent_geometry;
    let channel = if knowledge.knows_config() {
        owner_key.channel
    } else {
        let ic = owner_key.channel_index()?;
        ((ic + g.channels - 1) % g.channels) as i64
    };
    let key = generate_key(attacker_seed, owner_key.radius, channel, g)?;
    if key.ring_values == owner_key.ring_values && key.channel_index()? == owner_key.channel_index()? {
        return Err(Error::InvalidParameter("attacker key equals the owner key".into()));
    }
    let backend = if knowledge.knows_weights() { owner_backend.clone() } else { surrogate_backend(owner_backend) };
    Ok(ReembedPlan { key, backend })
}

/// Runs the embedder on `x` with the attacker's key and backend.
pub fn reembed_attack(x: &Image, plan: &ReembedPlan, config: &EmbedConfig) -> Result<Image> {
    let backend = build_backend(&plan.backend)?;
    Ok(Embedder::new(&backend, config.clone()).embed(x, &plan.key)?.watermarked)
}
