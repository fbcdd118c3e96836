//! Ring watermark keys, circular masks and injection into latents.

pub mod inject;
pub mod key;
pub mod ring;

pub use inject::{inject, inject_spatial, Injected, InjectionMode, Injector};
pub use key::{generate_key, WatermarkKey, KEY_VERSION};
pub use ring::{expand_watermark, make_mask, CircularMask, KeyPattern, RingWatermark};
