//! Slots for attacks that need external models, and toy stand-ins that
//! exercise the same pipeline positions without model weights.

use std::sync::Arc;

use super::builtin::{blur, regenerate};
use super::spec::{AdapterSlot, Attack, AttackContext, FnAttack, Params};
use crate::error::Result;
use crate::tensor::{Image, Latent};

pub const BM3D: &str = "bm3d";
pub const BMSHJ18: &str = "bmshj18";
pub const CHENG20: &str = "cheng20";
pub const REGENERATION: &str = "regeneration";

const BM3D_DEFAULTS: &[(&str, f64)] = &[("std", 0.1)];
const VAE_DEFAULTS: &[(&str, f64)] = &[("quality", 3.0)];
const REGEN_DEFAULTS: &[(&str, f64)] = &[("steps", 60.0)];

pub(crate) fn slots() -> Vec<Arc<dyn Attack>> {
    vec![
        Arc::new(AdapterSlot { name: BM3D, defaults: BM3D_DEFAULTS }),
        Arc::new(AdapterSlot { name: BMSHJ18, defaults: VAE_DEFAULTS }),
        Arc::new(AdapterSlot { name: CHENG20, defaults: VAE_DEFAULTS }),
        Arc::new(AdapterSlot { name: REGENERATION, defaults: REGEN_DEFAULTS }),
    ]
}

pub(crate) fn toy_adapters() -> Vec<Arc<dyn Attack>> {
    vec![
        Arc::new(FnAttack { name: BM3D, defaults: BM3D_DEFAULTS, run: toy_denoise }),
        Arc::new(FnAttack { name: BMSHJ18, defaults: VAE_DEFAULTS, run: toy_compress_coarse }),
        Arc::new(FnAttack { name: CHENG20, defaults: VAE_DEFAULTS, run: toy_compress_fine }),
        Arc::new(FnAttack { name: REGENERATION, defaults: REGEN_DEFAULTS, run: toy_regen }),
    ]
}

/// Gaussian smoothing with width proportional to the assumed noise level.
fn toy_denoise(x: &Image, p: &Params, _: &AttackContext) -> Result<Image> {
    let s = p.non_negative("std")?;
    if s == 0.0 {
        return Ok(x.clone());
    }
    Ok(Image(blur(x, 5, 10.0 * s)))
}

/// Uniform quantization of the codec latent; lower quality, coarser step.
fn quantize_latent(x: &Image, ctx: &AttackContext, name: &str, quality: i64, base: f64) -> Result<Image> {
    let backend = ctx.require_backend(name)?;
    let step = base / quality as f64;
    let z = backend.encode_image(&x.clamped())?;
    let q = Latent(z.map(|v| (v / step).round() * step));
    backend.decode_latent(&q)
}

fn toy_compress_coarse(x: &Image, p: &Params, ctx: &AttackContext) -> Result<Image> {
    quantize_latent(x, ctx, BMSHJ18, p.integer("quality", 1, 8)?, 0.4)
}

fn toy_compress_fine(x: &Image, p: &Params, ctx: &AttackContext) -> Result<Image> {
    quantize_latent(x, ctx, CHENG20, p.integer("quality", 1, 6)?, 0.3)
}

fn toy_regen(x: &Image, p: &Params, ctx: &AttackContext) -> Result<Image> {
    let backend = ctx.require_backend(REGENERATION)?;
    let steps = p.integer("steps", 1, backend.schedule().len() as i64)? as usize;
    regenerate(x, backend, steps, 50, false, ctx.seed)
}
