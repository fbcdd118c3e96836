//! Image attacks, ordered composite pipelines and the re-embedding attack.

pub mod adapters;
pub mod builtin;
pub mod geometry;
pub mod pipeline;
pub mod reembed;
pub mod spec;

pub use geometry::rotate;
pub use pipeline::{apply_attack, apply_pipeline, preset, PipelineRef, PRESETS};
pub use reembed::{reembed_attack, reembed_plan, BackendKnowledge, ReembedPlan};
pub use spec::{Attack, AttackContext, AttackRegistry, AttackSpec, Params};
