use serde::{Deserialize, Serialize};

use super::adapters::{BM3D, BMSHJ18, CHENG20, REGENERATION};
use super::builtin::{BRIGHTNESS, CONTRAST, GAUSSIAN_BLUR, GAUSSIAN_NOISE, JPEG, ROTATION};
use super::spec::{AttackContext, AttackRegistry, AttackSpec};
use crate::error::{Error, Result};
use crate::exec::split_seed;
use crate::tensor::Image;

pub const PRESET_ALL: &str = "all";
pub const PRESET_ALL_WO_ROTATION: &str = "all-wo-rotation";
pub const PRESET_ALL_WO_ROTATION_REV: &str = "all-wo-rotation-rev";

pub const PRESETS: [&str; 3] = [PRESET_ALL, PRESET_ALL_WO_ROTATION, PRESET_ALL_WO_ROTATION_REV];

/// Every individual attack at default strength, in evaluation order.
fn all() -> Vec<AttackSpec> {
    [BRIGHTNESS, CONTRAST, JPEG, ROTATION, GAUSSIAN_NOISE, GAUSSIAN_BLUR, BM3D, BMSHJ18, CHENG20, REGENERATION]
        .into_iter()
        .map(AttackSpec::new)
        .collect()
}

pub fn preset(name: &str) -> Result<Vec<AttackSpec>> {
    let mut specs = all();
    match name {
        PRESET_ALL => {}
        PRESET_ALL_WO_ROTATION => specs.retain(|s| s.name != ROTATION),
        PRESET_ALL_WO_ROTATION_REV => {
            specs.retain(|s| s.name != ROTATION);
            specs.reverse();
        }
        other => return Err(Error::UnknownAttack(format!("preset `{other}`"))),
    }
    Ok(specs)
}

/// A pipeline as written in a config file: a preset name, a single attack
/// name, or an explicit ordered list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PipelineRef {
    Named(String),
    Stages(Vec<AttackSpec>),
}

impl PipelineRef {
    pub fn resolve(&self) -> Result<Vec<AttackSpec>> {
        match self {
            PipelineRef::Named(n) if PRESETS.contains(&n.as_str()) => preset(n),
            PipelineRef::Named(n) => Ok(vec![AttackSpec::new(n)]),
            PipelineRef::Stages(s) => Ok(s.clone()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PipelineRef::Named(n) => n.clone(),
            PipelineRef::Stages(s) => s.iter().map(AttackSpec::label).collect::<Vec<_>>().join("+"),
        }
    }
}

/// Applies `specs` left to right. Stage `i` draws its randomness from
/// `split_seed(ctx.seed, i)`; a singleton uses `ctx.seed` directly.
pub fn apply_pipeline(x: &Image, specs: &[AttackSpec], registry: &AttackRegistry, ctx: &AttackContext) -> Result<Image> {
    if specs.is_empty() {
        return Err(Error::InvalidParameter("empty attack pipeline".into()));
    }
    if let [only] = specs {
        return registry.apply(x, only, ctx);
    }
    for (i, s) in specs.iter().enumerate() {
        registry.validate(s).map_err(|e| stage_error(i, s, e))?;
    }
    let mut cur = x.clone();
    for (i, s) in specs.iter().enumerate() {
        let stage = AttackContext { seed: split_seed(ctx.seed, i as u64), ..*ctx };
        cur = registry.apply(&cur, s, &stage).map_err(|e| stage_error(i, s, e))?;
    }
    Ok(cur)
}

fn stage_error(index: usize, spec: &AttackSpec, e: Error) -> Error {
    Error::PipelineStage { index, name: spec.name.clone(), source: Box::new(e) }
}

/// Single attack through the built-in registry.
pub fn apply_attack(x: &Image, spec: &AttackSpec, ctx: &AttackContext) -> Result<Image> {
    AttackRegistry::with_builtins().apply(x, spec, ctx)
}
