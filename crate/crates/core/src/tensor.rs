//! Dense channel-major rasters shared by images and latents.
//!
//! Storage is `[channel][row][col]`, row-major within a plane. Images use the
//! symmetric value range `[-1, 1]`; quality metrics map to `[0, 1]` first.

use std::fmt;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Geometry {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.channels * self.plane_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ensure_eq(&self, other: &Geometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch { expected: *self, actual: *other })
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl std::str::FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        let parsed: Option<Vec<usize>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
        match parsed.as_deref() {
            Some(&[c, h, w]) if c > 0 && h > 0 && w > 0 => Ok(Geometry::new(c, h, w)),
            _ => Err(Error::InvalidParameter(format!(
                "geometry `{s}` is not of the form CxHxW"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    geometry: Geometry,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(geometry: Geometry) -> Self {
        Self { geometry, data: vec![0.0; geometry.len()] }
    }

    pub fn filled(geometry: Geometry, value: f64) -> Self {
        Self { geometry, data: vec![value; geometry.len()] }
    }

    pub fn from_vec(geometry: Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::InvalidParameter(format!(
                "buffer of {} values does not fill geometry {geometry}",
                data.len()
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(geometry.len());
        for c in 0..geometry.channels {
            for r in 0..geometry.height {
                for col in 0..geometry.width {
                    data.push(f(c, r, col));
                }
            }
        }
        Self { geometry, data }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, r: usize, col: usize) -> usize {
        (c * self.geometry.height + r) * self.geometry.width + col
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[self.index(c, r, col)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, r: usize, col: usize, v: f64) {
        let i = self.index(c, r, col);
        self.data[i] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.geometry.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.geometry.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { geometry: self.geometry, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.geometry.ensure_eq(&other.geometry)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { geometry: self.geometry, data })
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: f64, other: &Self) {
        debug_assert_eq!(self.geometry, other.geometry);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

macro_rules! raster_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(pub Tensor3);

        impl $name {
            pub fn zeros(geometry: Geometry) -> Self {
                Self(Tensor3::zeros(geometry))
            }

            pub fn from_vec(geometry: Geometry, data: Vec<f64>) -> Result<Self> {
                Tensor3::from_vec(geometry, data).map(Self)
            }

            pub fn from_fn(geometry: Geometry, f: impl FnMut(usize, usize, usize) -> f64) -> Self {
                Self(Tensor3::from_fn(geometry, f))
            }

            pub fn into_inner(self) -> Tensor3 {
                self.0
            }
        }

        impl Deref for $name {
            type Target = Tensor3;
            fn deref(&self) -> &Tensor3 {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut Tensor3 {
                &mut self.0
            }
        }

        impl From<Tensor3> for $name {
            fn from(t: Tensor3) -> Self {
                Self(t)
            }
        }
    };
}

raster_newtype!(
    /// Spatial raster in the symmetric `[-1, 1]` convention.
    Image
);
raster_newtype!(
    /// Diffusion latent (real valued).
    Latent
);

impl Image {
    /// Values mapped from `[-1, 1]` to `[0, 1]`.
    pub fn to_unit(&self) -> Tensor3 {
        self.map(|v| 0.5 * (v + 1.0))
    }

    pub fn from_unit(t: &Tensor3) -> Self {
        Image(t.map(|v| 2.0 * v - 1.0))
    }

    pub fn clamped(&self) -> Self {
        Image(self.map(|v| v.clamp(-1.0, 1.0)))
    }

    pub fn check_range(&self) -> Result<()> {
        const SLACK: f64 = 1e-9;
        match self.as_slice().iter().find(|v| !(v.abs() <= 1.0 + SLACK)) {
            Some(&value) => Err(Error::RangeViolation { value }),
            None => Ok(()),
        }
    }

    /// Rounds every value to the nearest of `levels + 1` evenly spaced codes,
    /// matching what an integer raster of that depth would store.
    pub fn quantized(&self, levels: u32) -> Self {
        let l = levels as f64;
        Image(self.map(|v| {
            let u = (0.5 * (v.clamp(-1.0, 1.0) + 1.0) * l).round() / l;
            2.0 * u - 1.0
        }))
    }
}
