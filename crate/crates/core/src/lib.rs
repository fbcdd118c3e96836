//! Zero-bit ring watermarks hidden in the Fourier domain of diffusion latents.
//!
//! Embedding inverts an image to its noise latent, pins a ring pattern into
//! the low-frequency Fourier bins of one channel, optimizes the remaining
//! latent content until the regenerated image matches the original, and
//! finally blends toward the original to meet an SSIM target. Detection
//! inverts the test image and runs a non-central chi-squared test on the
//! masked bins.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod detector;
pub mod diffusion;
pub mod embedder;
pub mod error;
pub mod evalkit;
pub mod exec;
pub mod fourier;
pub mod io;
pub mod tensor;
pub mod watermark;

pub use error::{Error, Result};
pub use exec::Exec;
pub use tensor::{Geometry, Image, Latent, Tensor3};

/// Crate version stamped into every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
