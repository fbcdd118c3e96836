//! Noise schedules, deterministic DDIM sampling and inversion, and the
//! pluggable backend abstraction.

pub mod backend;
pub mod ddim;
pub mod schedule;
pub mod toy;

pub use backend::{
    build_backend, BackendConfig, BackendRegistry, DiffusionBackend, LatentCodec, NoisePredictor,
};
pub use ddim::DenoiseTrace;
pub use schedule::{make_schedule, NoiseSchedule, ScheduleKind, Spacing};
