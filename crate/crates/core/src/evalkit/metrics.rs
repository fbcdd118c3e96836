//! Image quality metrics on `[0, 1]`-mapped rasters.
//!
//! SSIM uses an 11-tap Gaussian window (σ = 1.5), `K1 = 0.01`, `K2 = 0.03`,
//! data range 1, population covariances, averages the SSIM map over the
//! valid (unpadded) region and then over channels. Images smaller than the
//! window use the largest odd window that fits.

use crate::error::{Error, Result};
use crate::tensor::{Image, Tensor3};

pub const PSNR_CAP: f64 = 100.0;

/// Peak signal-to-noise ratio in dB after mapping both images to `[0, 1]`;
/// identical images report [`PSNR_CAP`].
pub fn psnr(reference: &Image, candidate: &Image) -> Result<f64> {
    reference.geometry().ensure_eq(&candidate.geometry())?;
    let n = reference.as_slice().len() as f64;
    let mse = reference
        .as_slice()
        .iter()
        .zip(candidate.as_slice())
        .map(|(a, b)| (0.5 * (a - b)).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03 }
    }
}

impl SsimParams {
    fn kernel(&self, h: usize, w: usize) -> Vec<f64> {
        let mut size = self.window.min(h).min(w);
        if size.is_multiple_of(2) {
            size -= 1;
        }
        let half = (size / 2) as f64;
        let mut k: Vec<f64> = (0..size)
            .map(|i| (-(i as f64 - half).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        k
    }
}

/// Separable valid-mode correlation of one plane.
fn blur_valid(src: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            tmp[r * ow + c] = k.iter().zip(&row[c..c + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for (u, ku) in k.iter().enumerate() {
            let src_row = &tmp[(r + u) * ow..(r + u + 1) * ow];
            let dst = &mut out[r * ow..(r + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += ku * s;
            }
        }
    }
    out
}

/// Adjoint of [`blur_valid`].
fn blur_valid_adjoint(g: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..oh {
        for (u, ku) in k.iter().enumerate() {
            let dst = &mut tmp[(r + u) * ow..(r + u + 1) * ow];
            for (d, s) in dst.iter_mut().zip(&g[r * ow..(r + 1) * ow]) {
                *d += ku * s;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..ow {
            let v = tmp[r * ow + c];
            for (v2, ku) in out[r * w + c..r * w + c + n].iter_mut().zip(k) {
                *v2 += ku * v;
            }
        }
    }
    out
}

struct PlaneStats {
    mx: Vec<f64>,
    my: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

fn plane_stats(x: &[f64], y: &[f64], h: usize, w: usize, k: &[f64], p: &SsimParams) -> PlaneStats {
    let c1 = p.k1 * p.k1;
    let c2 = p.k2 * p.k2;
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = blur_valid(x, h, w, k);
    let my = blur_valid(y, h, w, k);
    let mxx = blur_valid(&xx, h, w, k);
    let myy = blur_valid(&yy, h, w, k);
    let mxy = blur_valid(&xy, h, w, k);
    let n = mx.len();
    let (mut a1, mut a2, mut b1, mut b2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        a1[i] = 2.0 * ux * uy + c1;
        a2[i] = 2.0 * (mxy[i] - ux * uy) + c2;
        b1[i] = ux * ux + uy * uy + c1;
        b2[i] = (mxx[i] - ux * ux) + (myy[i] - uy * uy) + c2;
    }
    PlaneStats { mx, my, a1, a2, b1, b2 }
}

fn check_pair(x: &Tensor3, y: &Tensor3) -> Result<()> {
    x.geometry().ensure_eq(&y.geometry())?;
    if x.geometry().is_empty() {
        return Err(Error::Metric("SSIM of an empty image".into()));
    }
    Ok(())
}

/// SSIM between two `[0, 1]` rasters.
pub fn ssim_unit(x: &Tensor3, y: &Tensor3, p: &SsimParams) -> Result<f64> {
    check_pair(x, y)?;
    let g = x.geometry();
    let k = p.kernel(g.height, g.width);
    let mut total = 0.0;
    for c in 0..g.channels {
        let s = plane_stats(x.plane(c), y.plane(c), g.height, g.width, &k, p);
        let n = s.a1.len();
        total += (0..n).map(|i| s.a1[i] * s.a2[i] / (s.b1[i] * s.b2[i])).sum::<f64>() / n as f64;
    }
    Ok(total / g.channels as f64)
}

/// SSIM and its gradient with respect to the second argument.
pub fn ssim_unit_with_grad(x: &Tensor3, y: &Tensor3, p: &SsimParams) -> Result<(f64, Tensor3)> {
    check_pair(x, y)?;
    let g = x.geometry();
    let k = p.kernel(g.height, g.width);
    let mut total = 0.0;
    let mut grad = Tensor3::zeros(g);
    let nc = g.channels as f64;
    for c in 0..g.channels {
        let s = plane_stats(x.plane(c), y.plane(c), g.height, g.width, &k, p);
        let n = s.a1.len();
        let scale = 1.0 / (n as f64 * nc);
        let mut d_my = vec![0.0; n];
        let mut d_myy = vec![0.0; n];
        let mut d_mxy = vec![0.0; n];
        let mut plane_sum = 0.0;
        for i in 0..n {
            let v = s.a1[i] * s.a2[i] / (s.b1[i] * s.b2[i]);
            plane_sum += v;
            let (ux, uy) = (s.mx[i], s.my[i]);
            d_my[i] = scale
                * v
                * (2.0 * ux / s.a1[i] - 2.0 * ux / s.a2[i] - 2.0 * uy / s.b1[i] + 2.0 * uy / s.b2[i]);
            d_myy[i] = -scale * v / s.b2[i];
            d_mxy[i] = 2.0 * scale * v / s.a2[i];
        }
        total += plane_sum / n as f64;
        let ga = blur_valid_adjoint(&d_my, g.height, g.width, &k);
        let gb = blur_valid_adjoint(&d_myy, g.height, g.width, &k);
        let gc = blur_valid_adjoint(&d_mxy, g.height, g.width, &k);
        let (xs, ys) = (x.plane(c), y.plane(c));
        for (q, out) in grad.plane_mut(c).iter_mut().enumerate() {
            *out = ga[q] + 2.0 * ys[q] * gb[q] + xs[q] * gc[q];
        }
    }
    Ok((total / nc, grad))
}

/// SSIM between two images in the symmetric convention.
pub fn ssim(reference: &Image, candidate: &Image) -> Result<f64> {
    ssim_unit(&reference.to_unit(), &candidate.to_unit(), &SsimParams::default())
}

/// Scalar image quality score, higher is better.
pub trait QualityMetric: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, reference: &Image, candidate: &Image) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Ssim;

impl QualityMetric for Ssim {
    fn name(&self) -> &str {
        "ssim"
    }

    fn score(&self, reference: &Image, candidate: &Image) -> Result<f64> {
        ssim(reference, candidate)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Psnr;

impl QualityMetric for Psnr {
    fn name(&self) -> &str {
        "psnr"
    }

    fn score(&self, reference: &Image, candidate: &Image) -> Result<f64> {
        psnr(reference, candidate)
    }
}

/// Perceptual distance slot (LPIPS-style). No built-in implementation.
pub trait PerceptualDistance: Send + Sync {
    fn name(&self) -> &str;
    fn distance(&self, reference: &Image, candidate: &Image) -> Result<f64>;
}
