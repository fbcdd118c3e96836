//! Watermark detection: invert, read the masked bins, test against the key.

pub mod chi2;
pub mod detect;

pub use chi2::noncentral_chi2_cdf;
pub use detect::{
    detect, detect_with_rotation_correction, distance_score, estimate_variance, extract_observation,
    noncentrality, DetectConfig, DetectionMode, DetectionResult, Detector, NullCalibration, NullModel,
    Parameterization,
};
