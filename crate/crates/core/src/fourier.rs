//! Per-channel orthonormal 2-D DFT with the zero frequency shifted to the
//! center (`fftshift` layout). Index `(r, c)` of a shifted plane holds
//! frequency `(r - h/2, c - w/2)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use crate::error::{Error, Result};
use crate::tensor::{Geometry, Latent};

/// Identifier of the transform convention recorded in watermark keys.
pub const TRANSFORM_ID: &str = "dft2-ortho-centered";

/// Largest imaginary part `from_fourier` silently discards.
pub const IMAG_RESIDUE_LIMIT: f64 = 1e-6;

pub struct FftPlan2d {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl FftPlan2d {
    fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    /// Cached plan for a plane size.
    pub fn get(height: usize, width: usize) -> Arc<FftPlan2d> {
        type PlanCache = Mutex<HashMap<(usize, usize), Arc<FftPlan2d>>>;
        static CACHE: OnceLock<PlanCache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry((height, width))
            .or_insert_with(|| Arc::new(FftPlan2d::new(height, width)))
            .clone()
    }

    /// In-place orthonormal transform of a row-major plane, unshifted layout.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
    }

    fn run(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (h, w) = (self.height, self.width);
        assert_eq!(buf.len(), h * w);
        rows.process(buf);
        let mut col = vec![Complex64::default(); h];
        for c in 0..w {
            for r in 0..h {
                col[r] = buf[r * w + c];
            }
            cols.process(&mut col);
            for r in 0..h {
                buf[r * w + c] = col[r];
            }
        }
        let norm = 1.0 / ((h * w) as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= norm);
    }
}

/// Shifted index of unshifted index `k` along an axis of length `n`.
#[inline]
pub fn shift_index(k: usize, n: usize) -> usize {
    (k + n / 2) % n
}

/// Unshifted index of shifted index `i`.
#[inline]
pub fn unshift_index(i: usize, n: usize) -> usize {
    (i + n - n / 2) % n
}

/// Signed frequency of unshifted index `k`.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Shifted index holding the conjugate-mirror frequency of shifted index `i`.
#[inline]
pub fn mirror_index(i: usize, n: usize) -> usize {
    let k = unshift_index(i, n);
    shift_index((n - k) % n, n)
}

fn fftshift_plane(src: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); h * w];
    for r in 0..h {
        let sr = shift_index(r, h);
        for c in 0..w {
            out[sr * w + shift_index(c, w)] = src[r * w + c];
        }
    }
    out
}

fn ifftshift_plane(src: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); h * w];
    for r in 0..h {
        let ur = unshift_index(r, h);
        for c in 0..w {
            out[ur * w + unshift_index(c, w)] = src[r * w + c];
        }
    }
    out
}

/// Center-shifted, orthonormal Fourier representation of a latent.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierLatent {
    geometry: Geometry,
    data: Vec<Complex64>,
}

impl FourierLatent {
    pub fn zeros(geometry: Geometry) -> Self {
        Self { geometry, data: vec![Complex64::default(); geometry.len()] }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn plane(&self, c: usize) -> &[Complex64] {
        let n = self.geometry.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.geometry.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Forward transform of one real plane into shifted layout.
pub fn plane_to_fourier(plane: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlan2d::get(h, w).forward(&mut buf);
    fftshift_plane(&buf, h, w)
}

/// Inverse transform of one shifted plane; returns the full complex result.
pub fn plane_from_fourier(plane: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut buf = ifftshift_plane(plane, h, w);
    FftPlan2d::get(h, w).inverse(&mut buf);
    buf
}

pub fn to_fourier(z: &Latent) -> FourierLatent {
    let g = z.geometry();
    let mut out = FourierLatent::zeros(g);
    for c in 0..g.channels {
        let f = plane_to_fourier(z.plane(c), g.height, g.width);
        out.plane_mut(c).copy_from_slice(&f);
    }
    out
}

/// Exact inverse of [`to_fourier`]; fails when the inverse carries an
/// imaginary part above [`IMAG_RESIDUE_LIMIT`].
pub fn from_fourier(f: &FourierLatent) -> Result<Latent> {
    let (z, residue) = from_fourier_real_part(f);
    if residue > IMAG_RESIDUE_LIMIT {
        return Err(Error::ImaginaryResidue { residue, limit: IMAG_RESIDUE_LIMIT });
    }
    Ok(z)
}

/// Inverse transform keeping only the real part, i.e. the projection onto
/// conjugate-symmetric spectra. Also returns the largest discarded imaginary
/// magnitude.
pub fn from_fourier_real_part(f: &FourierLatent) -> (Latent, f64) {
    let g = f.geometry();
    let mut z = Latent::zeros(g);
    let mut residue = 0.0f64;
    for c in 0..g.channels {
        let inv = plane_from_fourier(f.plane(c), g.height, g.width);
        for (dst, v) in z.plane_mut(c).iter_mut().zip(&inv) {
            *dst = v.re;
            residue = residue.max(v.im.abs());
        }
    }
    (z, residue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_latent(g: Geometry, seed: u64) -> Latent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Latent::from_fn(g, |_, _, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn round_trip_is_exact() {
        for g in [Geometry::new(2, 8, 8), Geometry::new(1, 6, 10), Geometry::new(3, 7, 5)] {
            let z = random_latent(g, 3);
            let back = from_fourier(&to_fourier(&z)).unwrap();
            assert!(z.max_abs_diff(&back) < 1e-9);
        }
    }

    #[test]
    fn constant_latent_concentrates_at_center() {
        let g = Geometry::new(1, 8, 8);
        let z = Latent::from_fn(g, |_, _, _| 0.75);
        let f = to_fourier(&z);
        let center = 4 * 8 + 4;
        let total = f.energy();
        assert!((f.plane(0)[center].norm_sqr() - total).abs() < 1e-12);
        assert!((f.plane(0)[center].re - 0.75 * 8.0).abs() < 1e-12);
    }

    #[test]
    fn parseval() {
        let z = random_latent(Geometry::new(4, 16, 16), 9);
        let f = to_fourier(&z);
        let rel = (z.sum_sq() - f.energy()).abs() / z.sum_sq();
        assert!(rel < 1e-6);
    }

    #[test]
    fn non_hermitian_spectrum_is_rejected() {
        let g = Geometry::new(1, 8, 8);
        let mut f = to_fourier(&random_latent(g, 1));
        f.plane_mut(0)[3 * 8 + 5] += Complex64::new(0.0, 1.0);
        assert!(matches!(from_fourier(&f), Err(Error::ImaginaryResidue { .. })));
        let (_, residue) = from_fourier_real_part(&f);
        assert!(residue > IMAG_RESIDUE_LIMIT);
    }

    #[test]
    fn mirror_of_mirror_is_identity() {
        for n in [5usize, 8, 9, 64] {
            for i in 0..n {
                assert_eq!(mirror_index(mirror_index(i, n), n), i);
            }
        }
        // center maps to itself
        assert_eq!(mirror_index(32, 64), 32);
        assert_eq!(mirror_index(33, 64), 31);
    }

    #[test]
    fn real_spectra_are_conjugate_symmetric() {
        let g = Geometry::new(1, 8, 6);
        let f = to_fourier(&random_latent(g, 5));
        let p = f.plane(0);
        for r in 0..8 {
            for c in 0..6 {
                let m = p[mirror_index(r, 8) * 6 + mirror_index(c, 6)];
                assert!((p[r * 6 + c] - m.conj()).norm() < 1e-12);
            }
        }
    }
}
