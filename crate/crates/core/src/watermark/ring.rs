use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Geometry;
use crate::watermark::key::WatermarkKey;

/// Squared distance from `(r, c)` to the center `(h/2, w/2)`.
#[inline]
fn dist2(r: usize, c: usize, h: usize, w: usize) -> u64 {
    let dr = r as i64 - (h / 2) as i64;
    let dc = c as i64 - (w / 2) as i64;
    (dr * dr + dc * dc) as u64
}

/// `⌈√n⌉` without floating point.
#[inline]
fn ceil_sqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Binary disk `d(p, c) ≤ d*` over one `h×w` plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircularMask {
    height: usize,
    width: usize,
    radius: usize,
    bits: Vec<bool>,
    indices: Vec<usize>,
}

impl CircularMask {
    pub fn new(height: usize, width: usize, radius: usize) -> Self {
        let r2 = (radius * radius) as u64;
        let mut bits = vec![false; height * width];
        let mut indices = Vec::new();
        for r in 0..height {
            for c in 0..width {
                if dist2(r, c, height, width) <= r2 {
                    bits[r * width + c] = true;
                    indices.push(r * width + c);
                }
            }
        }
        Self { height, width, radius, bits, indices }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `Σ M`.
    pub fn cardinality(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.width + c]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Flat row-major indices of the masked points, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

pub fn make_mask(geometry: Geometry, radius: usize) -> CircularMask {
    CircularMask::new(geometry.height, geometry.width, radius)
}

/// Ring pattern over one plane: `W_p = w_{⌈d(p,c)⌉}` inside the disk, zero
/// outside.
#[derive(Debug, Clone, PartialEq)]
pub struct RingWatermark {
    height: usize,
    width: usize,
    values: Vec<Complex64>,
}

impl RingWatermark {
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.values[r * self.width + c]
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Index into the key's ring values for lattice point `(r, c)`, if inside
/// the disk.
pub fn ring_index(r: usize, c: usize, h: usize, w: usize, radius: usize) -> Option<usize> {
    let d2 = dist2(r, c, h, w);
    (d2 <= (radius * radius) as u64).then(|| ceil_sqrt(d2) as usize)
}

pub fn expand_watermark(key: &WatermarkKey) -> Result<RingWatermark> {
    key.validate()?;
    let g = key.latent_geometry;
    let mut values = vec![Complex64::default(); g.plane_len()];
    for r in 0..g.height {
        for c in 0..g.width {
            if let Some(i) = ring_index(r, c, g.height, g.width, key.radius) {
                values[r * g.width + c] = key.ring(i);
            }
        }
    }
    Ok(RingWatermark { height: g.height, width: g.width, values })
}

/// Watermark and mask for a key, checked against each other.
#[derive(Debug, Clone)]
pub struct KeyPattern {
    pub channel: usize,
    pub mask: CircularMask,
    pub ring: RingWatermark,
}

impl KeyPattern {
    pub fn new(key: &WatermarkKey) -> Result<Self> {
        let ring = expand_watermark(key)?;
        let mask = make_mask(key.latent_geometry, key.radius);
        if mask.cardinality() == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Self { channel: key.channel_index()?, mask, ring })
    }

    /// Watermark values at the masked points, in mask order.
    pub fn masked_values(&self) -> Vec<Complex64> {
        self.mask.indices().iter().map(|&i| self.ring.values()[i]).collect()
    }
}
