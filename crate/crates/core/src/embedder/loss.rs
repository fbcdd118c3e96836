use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evalkit::metrics::{ssim_unit_with_grad, SsimParams};
use crate::tensor::{Image, Tensor3};

/// Differentiable perceptual loss on `[0, 1]` rasters, e.g. Watson-VGG.
pub trait PerceptualLoss: Send + Sync {
    fn name(&self) -> &str;

    /// Loss value and its gradient with respect to `candidate`.
    fn loss_and_grad(&self, reference: &Tensor3, candidate: &Tensor3) -> Result<(f64, Tensor3)>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub l2: f64,
    /// `1 − SSIM`.
    pub ssim: f64,
    pub perceptual: f64,
}

impl LossValue {
    pub fn ssim_value(&self) -> f64 {
        1.0 - self.ssim
    }
}

/// `L = L2 + λ_s·(1 − SSIM) + λ_p·L_p` on `[0, 1]`-mapped images, with the
/// gradient with respect to `candidate` in the symmetric image convention.
/// The perceptual term is dropped when no provider is given.
pub fn reconstruction_loss_with_grad(
    reference: &Image,
    candidate: &Image,
    lambda_ssim: f64,
    lambda_perceptual: f64,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<(LossValue, Image)> {
    reference.geometry().ensure_eq(&candidate.geometry())?;
    let u0 = reference.to_unit();
    let u = candidate.to_unit();
    let n = u.as_slice().len() as f64;
    let mut grad = Tensor3::zeros(u.geometry());
    let mut l2 = 0.0;
    for ((g, a), b) in grad.as_mut_slice().iter_mut().zip(u.as_slice()).zip(u0.as_slice()) {
        let d = a - b;
        l2 += d * d;
        *g = 2.0 * d / n;
    }
    l2 /= n;
    let (s, sg) = ssim_unit_with_grad(&u0, &u, &SsimParams::default())?;
    grad.axpy(-lambda_ssim, &sg);
    let mut lp = 0.0;
    if let (Some(p), true) = (perceptual, lambda_perceptual > 0.0) {
        let (v, pg) = p.loss_and_grad(&u0, &u)?;
        lp = v;
        grad.axpy(lambda_perceptual, &pg);
    }
    // d(unit)/d(image) = 1/2
    grad.scale(0.5);
    let value = LossValue {
        total: l2 + lambda_ssim * (1.0 - s) + lambda_perceptual * lp,
        l2,
        ssim: 1.0 - s,
        perceptual: lp,
    };
    Ok((value, Image(grad)))
}

pub fn reconstruction_loss(
    reference: &Image,
    candidate: &Image,
    lambda_ssim: f64,
    lambda_perceptual: f64,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<LossValue> {
    reconstruction_loss_with_grad(reference, candidate, lambda_ssim, lambda_perceptual, perceptual)
        .map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Geometry;

    fn pair() -> (Image, Image) {
        let g = Geometry::new(3, 8, 8);
        let a = Image::from_fn(g, |c, r, col| (0.4 * r as f64 + 0.7 * col as f64 + c as f64).sin() * 0.8);
        let b = Image::from_fn(g, |c, r, col| a.get(c, r, col) + 0.15 * (1.3 * r as f64 - 0.4 * col as f64).cos());
        (a, b)
    }

    /// Mean absolute difference as a stand-in provider.
    struct L1;

    impl PerceptualLoss for L1 {
        fn name(&self) -> &str {
            "l1"
        }

        fn loss_and_grad(&self, reference: &Tensor3, candidate: &Tensor3) -> Result<(f64, Tensor3)> {
            let n = reference.as_slice().len() as f64;
            let v = reference.as_slice().iter().zip(candidate.as_slice()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
            let g = candidate.zip_map(reference, |c, r| (c - r).signum() / n)?;
            Ok((v, g))
        }
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let (a, _) = pair();
        let v = reconstruction_loss(&a, &a, 0.1, 0.01, Some(&L1)).unwrap();
        assert!(v.total.abs() < 1e-15 && v.l2 == 0.0 && v.ssim.abs() < 1e-15 && v.perceptual == 0.0);
    }

    #[test]
    fn plain_mse_without_weights() {
        let (a, b) = pair();
        let v = reconstruction_loss(&a, &b, 0.0, 0.0, None).unwrap();
        let (ua, ub) = (a.to_unit(), b.to_unit());
        let direct = ua.as_slice().iter().zip(ub.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
            / ua.as_slice().len() as f64;
        assert!((v.total - direct).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (a, b) = pair();
        let (_, grad) = reconstruction_loss_with_grad(&a, &b, 0.1, 0.01, Some(&L1)).unwrap();
        let f = |x: &Image| reconstruction_loss(&a, x, 0.1, 0.01, Some(&L1)).unwrap().total;
        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..b.as_slice().len() {
            let mut p = b.clone();
            p.as_mut_slice()[i] += h;
            let mut m = b.clone();
            m.as_mut_slice()[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            let an = grad.as_slice()[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
        }
        assert!(worst < 1e-3, "{worst}");
    }
}
