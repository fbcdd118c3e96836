//! Synthetic image corpora drawn from a toy backend.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionBackend;
use crate::error::Result;
use crate::exec::{self, split_seed, Exec};
use crate::tensor::{Image, Latent};

/// Keeps pristine images disjoint from the corpus that gets watermarked.
const PRISTINE_STREAM: u64 = 0x5052_4953_5449_4e45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub count: usize,
    pub seed: u64,
    /// Sampling steps used to generate each image.
    pub steps: usize,
    /// Pixel noise added after decoding, in image units.
    pub noise: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { count: 20, seed: 0, steps: 50, noise: 0.02 }
    }
}

/// `clamp(G(z) + noise)` quantized to 8 bits, with `z ~ N(0, I)`.
pub fn toy_image(backend: &DiffusionBackend, seed: u64, steps: usize, noise: f64) -> Result<Image> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let z = Latent::from_fn(backend.latent_geometry(), |_, _, _| rng.sample(StandardNormal));
    let mut x = backend.noise_to_image(&z, steps)?;
    for v in x.as_mut_slice() {
        *v += noise * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(x.quantized(255))
}

fn generate(backend: &DiffusionBackend, spec: &CorpusSpec, stream: u64, exec: Exec) -> Result<Vec<Image>> {
    exec::map_range(exec, spec.count, |i| {
        toy_image(backend, split_seed(spec.seed ^ stream, i as u64), spec.steps, spec.noise)
    })
    .into_iter()
    .collect()
}

/// Images to be watermarked.
pub fn toy_corpus(backend: &DiffusionBackend, spec: &CorpusSpec, exec: Exec) -> Result<Vec<Image>> {
    generate(backend, spec, 0, exec)
}

/// Never-watermarked images from a separate seed stream.
pub fn pristine_corpus(backend: &DiffusionBackend, spec: &CorpusSpec, exec: Exec) -> Result<Vec<Image>> {
    generate(backend, spec, PRISTINE_STREAM, exec)
}
