//! Quality metrics, detection-rate aggregation and the sweep harness.

pub mod corpus;
pub mod metrics;
pub mod report;
pub mod stats;
pub mod sweep;

pub use metrics::{psnr, ssim, Psnr, QualityMetric, Ssim, SsimParams};
pub use report::{aggregate, config_hash, Cell, EvalReport, Provenance, Record, CSV_SCHEMA_VERSION, NO_ATTACK};
pub use sweep::{run_sweep, EmbedCache, SweepConfig, SweepGrid, SweepInputs, SweepOutput};
