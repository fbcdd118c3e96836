use crate::error::{Error, Result};
use crate::evalkit::metrics::QualityMetric;
use crate::tensor::Image;

/// Bracket width at which the γ search stops.
pub const GAMMA_TOLERANCE: f64 = 0.01;

/// `x̂ + γ(x0 − x̂)`.
pub fn blend(x0: &Image, generated: &Image, gamma: f64) -> Result<Image> {
    Ok(Image(generated.zip_map(x0, |g, o| g + gamma * (o - g))?))
}

/// Smallest `γ ∈ [0, 1]` (to within [`GAMMA_TOLERANCE`]) whose blend reaches
/// `s*`, found by bisection. Returns the blended image and `γ*`.
pub fn enhance(
    x0: &Image,
    generated: &Image,
    threshold: f64,
    metric: &dyn QualityMetric,
) -> Result<(Image, f64)> {
    if !(threshold > 0.0 && threshold <= 1.0) && metric.name() == "ssim" {
        return Err(Error::InvalidParameter(format!("s* = {threshold} outside (0, 1]")));
    }
    let score = |gamma: f64| -> Result<(Image, f64)> {
        let img = blend(x0, generated, gamma)?;
        let s = metric.score(x0, &img)?;
        if s.is_nan() {
            return Err(Error::Metric(format!("{} returned NaN", metric.name())));
        }
        Ok((img, s))
    };
    let (img0, s0) = score(0.0)?;
    if s0 >= threshold {
        return Ok((img0, 0.0));
    }
    let (img1, s1) = score(1.0)?;
    if s1 < threshold {
        return Err(Error::UnreachableQuality { target: threshold, achieved: s1 });
    }
    let (mut lo, mut hi, mut best) = (0.0, 1.0, img1);
    while hi - lo >= GAMMA_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let (img, s) = score(mid)?;
        if s >= threshold {
            hi = mid;
            best = img;
        } else {
            lo = mid;
        }
    }
    Ok((best, hi))
}
