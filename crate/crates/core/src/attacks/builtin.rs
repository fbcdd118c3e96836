use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::geometry::rotate;
use super::spec::{Attack, AttackContext, FnAttack, Params};
use crate::diffusion::DiffusionBackend;
use crate::error::{Error, Result};
use crate::io::jpeg_roundtrip;
use crate::tensor::{Image, Tensor3};

pub const BRIGHTNESS: &str = "brightness";
pub const CONTRAST: &str = "contrast";
pub const JPEG: &str = "jpeg";
pub const ROTATION: &str = "rotation";
pub const GAUSSIAN_NOISE: &str = "gaussian_noise";
pub const GAUSSIAN_BLUR: &str = "gaussian_blur";
pub const TOY_REGENERATION: &str = "toy_regeneration";

pub(crate) fn builtins() -> Vec<Arc<dyn Attack>> {
    let table: [FnAttack; 7] = [
        FnAttack { name: BRIGHTNESS, defaults: &[("factor", 0.5)], run: brightness },
        FnAttack { name: CONTRAST, defaults: &[("factor", 0.5)], run: contrast },
        FnAttack { name: JPEG, defaults: &[("quality", 50.0)], run: jpeg },
        FnAttack { name: ROTATION, defaults: &[("degrees", 90.0)], run: rotation },
        FnAttack { name: GAUSSIAN_NOISE, defaults: &[("std", 0.05)], run: gaussian_noise },
        FnAttack { name: GAUSSIAN_BLUR, defaults: &[("kernel", 5.0), ("std", 1.0)], run: gaussian_blur },
        FnAttack {
            name: TOY_REGENERATION,
            defaults: &[("steps", 60.0), ("sampler_steps", 50.0), ("invert", 0.0)],
            run: toy_regeneration,
        },
    ];
    table.into_iter().map(|a| Arc::new(a) as Arc<dyn Attack>).collect()
}

fn in_unit(x: &Image, mut f: impl FnMut(&Tensor3) -> Tensor3) -> Image {
    Image::from_unit(&f(&x.to_unit()))
}

/// Blend toward black: `u · factor` in `[0, 1]`.
fn brightness(x: &Image, p: &Params, _: &AttackContext) -> Result<Image> {
    let f = p.non_negative("factor")?;
    Ok(in_unit(x, |u| u.map(|v| (v * f).clamp(0.0, 1.0))))
}

/// Blend toward the mean gray level: `m + factor · (u − m)`.
fn contrast(x: &Image, p: &Params, _: &AttackContext) -> Result<Image> {
    let f = p.non_negative("factor")?;
    let u = x.to_unit();
    let g = u.geometry();
    let mean = if g.channels == 3 {
        let (r, gr, b) = (u.plane(0), u.plane(1), u.plane(2));
        let s: f64 = (0..g.plane_len()).map(|i| 0.299 * r[i] + 0.587 * gr[i] + 0.114 * b[i]).sum();
        s / g.plane_len() as f64
    } else {
        u.as_slice().iter().sum::<f64>() / g.len() as f64
    };
    Ok(Image::from_unit(&u.map(|v| (mean + f * (v - mean)).clamp(0.0, 1.0))))
}

fn jpeg(x: &Image, p: &Params, _: &AttackContext) -> Result<Image> {
    let q = p.integer("quality", 1, 100)?;
    jpeg_roundtrip(x, q as u8)
}

fn rotation(x: &Image, p: &Params, _: &AttackContext) -> Result<Image> {
    let y = rotate(x, p.get("degrees"));
    if y.geometry() != x.geometry() {
        return Err(Error::InvalidParameter(format!(
            "rotating a {} image by {}° changes its shape",
            x.geometry(),
            p.get("degrees")
        )));
    }
    Ok(y)
}

/// Additive `N(0, std²)` in `[0, 1]` units.
fn gaussian_noise(x: &Image, p: &Params, ctx: &AttackContext) -> Result<Image> {
    let s = p.non_negative("std")?;
    let mut rng = ChaCha20Rng::seed_from_u64(ctx.seed);
    Ok(in_unit(x, |u| {
        let mut out = u.clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v += s * rng.sample::<f64, _>(StandardNormal));
        out
    }))
}

pub fn gaussian_kernel(size: usize, std: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let k: Vec<f64> = (0..size).map(|i| (-(i as f64 - half).powi(2) / (2.0 * std * std)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Mirror without repeating the edge sample.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

/// Separable blur with reflect padding.
pub fn blur(x: &Tensor3, size: usize, std: f64) -> Tensor3 {
    let k = gaussian_kernel(size, std);
    let half = (size / 2) as i64;
    let g = x.geometry();
    let rows = Tensor3::from_fn(g, |c, r, col| {
        k.iter()
            .enumerate()
            .map(|(i, w)| w * x.get(c, r, reflect(col as i64 + i as i64 - half, g.width)))
            .sum()
    });
    Tensor3::from_fn(g, |c, r, col| {
        k.iter()
            .enumerate()
            .map(|(i, w)| w * rows.get(c, reflect(r as i64 + i as i64 - half, g.height), col))
            .sum()
    })
}

fn gaussian_blur(x: &Image, p: &Params, _: &AttackContext) -> Result<Image> {
    let size = p.integer("kernel", 1, 255)? as usize;
    if size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("blur kernel {size} must be odd")));
    }
    let std = p.get("std");
    if !(std > 0.0) {
        return Err(Error::InvalidParameter(format!("blur std {std} must be positive")));
    }
    Ok(Image(blur(x, size, std)))
}

/// Partial noising to timestep `noise_step` followed by DDIM denoising.
/// With `invert` the noising is the deterministic inversion instead of
/// fresh Gaussian noise.
pub fn regenerate(
    x: &Image,
    backend: &DiffusionBackend,
    noise_step: usize,
    sampler_steps: usize,
    invert: bool,
    seed: u64,
) -> Result<Image> {
    let schedule = backend.schedule();
    if noise_step == 0 || noise_step > schedule.len() {
        return Err(Error::InvalidParameter(format!(
            "regeneration step {noise_step} outside [1, {}]",
            schedule.len()
        )));
    }
    let mut ts: Vec<usize> = schedule.timesteps(sampler_steps)?.into_iter().filter(|&t| t < noise_step).collect();
    ts.push(noise_step);
    let z0 = backend.encode_image(&x.clamped())?;
    let zt = if invert {
        backend.ddim_invert_over(&z0, &ts)?
    } else {
        let ab = schedule.alpha_bar_at(noise_step);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        let mut z = z0;
        z.as_mut_slice().iter_mut().for_each(|v| *v = a * *v + b * rng.sample::<f64, _>(StandardNormal));
        z
    };
    let z = backend.ddim_denoise_over(&zt, &ts)?;
    backend.decode_latent(&z)
}

fn toy_regeneration(x: &Image, p: &Params, ctx: &AttackContext) -> Result<Image> {
    let backend = ctx.require_backend(TOY_REGENERATION)?;
    let steps = p.integer("steps", 1, backend.schedule().len() as i64)? as usize;
    let sampler = p.integer("sampler_steps", 1, backend.schedule().len() as i64)? as usize;
    let invert = p.integer("invert", 0, 1)? == 1;
    regenerate(x, backend, steps, sampler, invert, ctx.seed)
}
