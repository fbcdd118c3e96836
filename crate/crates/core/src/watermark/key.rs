use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::TRANSFORM_ID;
use crate::tensor::Geometry;

pub const KEY_VERSION: u32 = 1;

/// Portable watermark secret. Ring values are stored explicitly; the seed is
/// provenance only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatermarkKey {
    pub version: u32,
    pub seed: u64,
    pub radius: usize,
    /// Latent channel index; `-1` selects the last channel.
    pub channel: i64,
    pub latent_geometry: Geometry,
    /// `[re, im]` per integer radius `0..=radius`.
    pub ring_values: Vec<[f64; 2]>,
    pub transform_id: String,
    /// Identifier of the backend the key was made for, if recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
}

/// Largest admissible radius for a geometry: `d* < min(h, w) / 2`.
pub fn check_radius(radius: usize, g: Geometry) -> Result<()> {
    if 2 * radius >= g.height.min(g.width) {
        return Err(Error::RadiusTooLarge { radius, height: g.height, width: g.width });
    }
    Ok(())
}

pub fn resolve_channel(channel: i64, channels: usize) -> Result<usize> {
    let resolved = if channel < 0 { channels as i64 + channel } else { channel };
    if resolved < 0 || resolved >= channels as i64 {
        return Err(Error::ChannelOutOfRange { channel, channels });
    }
    Ok(resolved as usize)
}

/// Draws `d* + 1` ring values `w_r ~ CN(0, 1)` in ascending radius order:
/// ChaCha20 seeded from `seed`, real then imaginary part per radius, each a
/// standard normal scaled by `√½`.
pub fn generate_key(seed: u64, radius: usize, channel: i64, geometry: Geometry) -> Result<WatermarkKey> {
    check_radius(radius, geometry)?;
    resolve_channel(channel, geometry.channels)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = 0.5f64.sqrt();
    let ring_values = (0..=radius)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            [half * re, half * im]
        })
        .collect();
    Ok(WatermarkKey {
        version: KEY_VERSION,
        seed,
        radius,
        channel,
        latent_geometry: geometry,
        ring_values,
        transform_id: TRANSFORM_ID.to_string(),
        backend: None,
    })
}

impl WatermarkKey {
    pub fn with_backend(mut self, id: &str) -> Self {
        self.backend = Some(id.to_string());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != KEY_VERSION {
            return Err(Error::InvalidKey(format!("unsupported version {}", self.version)));
        }
        if self.transform_id != TRANSFORM_ID {
            return Err(Error::InvalidKey(format!("unknown transform `{}`", self.transform_id)));
        }
        if self.ring_values.len() != self.radius + 1 {
            return Err(Error::InvalidKey(format!(
                "{} ring values for radius {}",
                self.ring_values.len(),
                self.radius
            )));
        }
        if self.ring_values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKey("non-finite ring value".into()));
        }
        check_radius(self.radius, self.latent_geometry)?;
        resolve_channel(self.channel, self.latent_geometry.channels)?;
        Ok(())
    }

    pub fn channel_index(&self) -> Result<usize> {
        resolve_channel(self.channel, self.latent_geometry.channels)
    }

    pub fn ring(&self, r: usize) -> Complex64 {
        let [re, im] = self.ring_values[r];
        Complex64::new(re, im)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let key: WatermarkKey = serde_json::from_str(s)?;
        key.validate()?;
        Ok(key)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const G: Geometry = Geometry::new(4, 64, 64);

    #[test]
    fn deterministic_generation() {
        let a = generate_key(7, 10, -1, G).unwrap();
        let b = generate_key(7, 10, -1, G).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ring_values.len(), 11);
        assert_ne!(a, generate_key(8, 10, -1, G).unwrap());
    }

    #[test]
    fn zero_radius_has_one_value() {
        assert_eq!(generate_key(1, 0, 0, G).unwrap().ring_values.len(), 1);
    }

    #[test]
    fn radius_limit() {
        assert!(generate_key(1, 31, -1, G).is_ok());
        assert!(matches!(generate_key(1, 32, -1, G), Err(Error::RadiusTooLarge { .. })));
        assert!(matches!(generate_key(1, 40, -1, G), Err(Error::RadiusTooLarge { .. })));
    }

    #[test]
    fn channel_resolution() {
        assert_eq!(resolve_channel(-1, 4).unwrap(), 3);
        assert_eq!(resolve_channel(0, 4).unwrap(), 0);
        assert!(resolve_channel(4, 4).is_err());
        assert!(resolve_channel(-5, 4).is_err());
    }

    #[test]
    fn unit_complex_variance() {
        let key = generate_key(2024, 9999, 0, Geometry::new(1, 20000, 20000)).unwrap();
        let mean: f64 = (0..=9999).map(|r| key.ring(r).norm_sqr()).sum::<f64>() / 10000.0;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn rejects_unknown_fields_and_bad_lengths() {
        let key = generate_key(3, 4, -1, G).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&key.to_json().unwrap()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(WatermarkKey::from_json(&v.to_string()).is_err());
        let mut short = key.clone();
        short.ring_values.pop();
        assert!(matches!(short.validate(), Err(Error::InvalidKey(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        let key = generate_key(99, 10, -1, G).unwrap().with_backend("spectral");
        key.save(&path).unwrap();
        let back = WatermarkKey::load(&path).unwrap();
        assert_eq!(key, back);
        for (a, b) in key.ring_values.iter().zip(&back.ring_values) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    proptest! {
        #[test]
        fn serialization_is_bit_exact(seed in any::<u64>(), radius in 0usize..31) {
            let key = generate_key(seed, radius, -1, G).unwrap();
            let back = WatermarkKey::from_json(&key.to_json().unwrap()).unwrap();
            for (a, b) in key.ring_values.iter().zip(&back.ring_values) {
                prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
                prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
            }
            prop_assert_eq!(key, back);
        }
    }
}
