use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::attacks::geometry::rotate;
use crate::detector::chi2::noncentral_chi2_cdf;
use crate::diffusion::DiffusionBackend;
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::fourier::plane_to_fourier;
use crate::tensor::Image;
use crate::watermark::{CircularMask, InjectionMode, KeyPattern, WatermarkKey};

/// Degrees-of-freedom accounting for the analytic null.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// `p = CDF(η; k = ΣM, λ)`.
    #[default]
    Complex,
    /// `p = CDF(2η; 2ΣM, 2λ)`: each complex bin as two real components of
    /// variance `σ²/2`.
    RealDimension,
}

/// Distribution of synthetic null observations in calibrated mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullModel {
    /// Masked bins of the transform of a white real Gaussian latent, which
    /// carry the conjugate pairing of real inputs.
    #[default]
    WhiteLatent,
    /// Independent `CN(0, 1)` bins.
    ComplexGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectionMode {
    Analytic {
        #[serde(default)]
        parameterization: Parameterization,
    },
    Calibrated {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        null: NullModel,
    },
}

fn default_samples() -> usize {
    10_000
}

impl Default for DetectionMode {
    fn default() -> Self {
        DetectionMode::Analytic { parameterization: Parameterization::Complex }
    }
}

impl DetectionMode {
    pub fn calibrated(samples: usize, seed: u64) -> Self {
        DetectionMode::Calibrated { samples, seed, null: NullModel::WhiteLatent }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub steps: usize,
    /// `p*`.
    pub threshold: f64,
    pub mode: DetectionMode,
    /// Where the observation is read: the transform of the inverted latent,
    /// or its spatial values (for spatially injected keys).
    pub domain: InjectionMode,
    pub exec: Exec,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            threshold: 0.9,
            mode: DetectionMode::default(),
            domain: InjectionMode::Fourier,
            exec: Exec::default(),
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!("p* = {} outside (0, 1)", self.threshold)));
        }
        if let DetectionMode::Calibrated { samples, .. } = self.mode {
            if samples == 0 {
                return Err(Error::InvalidParameter("calibrated mode needs samples".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub eta: f64,
    pub sigma2: f64,
    pub dof: usize,
    pub lambda: f64,
    pub p_value: f64,
    /// `1 − p`.
    pub score: f64,
    pub detected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_angle: Option<f64>,
    /// Set when the observation had zero energy; reported as not detected.
    #[serde(default)]
    pub degenerate: bool,
}

impl DetectionResult {
    pub fn degenerate(dof: usize) -> Self {
        Self {
            eta: f64::NAN,
            sigma2: 0.0,
            dof,
            lambda: f64::NAN,
            p_value: 1.0,
            score: 0.0,
            detected: false,
            rotation_angle: None,
            degenerate: true,
        }
    }

    /// Re-applies a threshold to the stored score.
    pub fn decide(&self, threshold: f64) -> bool {
        self.score > threshold
    }
}

/// `y = F(G'(x))[ic]` (or the spatial plane in spatial mode), as a full
/// plane in the key's layout.
pub fn extract_observation(
    x: &Image,
    key: &WatermarkKey,
    backend: &DiffusionBackend,
    steps: usize,
    domain: InjectionMode,
) -> Result<Vec<Complex64>> {
    key.latent_geometry.ensure_eq(&backend.latent_geometry())?;
    let ic = key.channel_index()?;
    let z = backend.image_to_noise(x, steps)?;
    let g = z.geometry();
    Ok(match domain {
        InjectionMode::Fourier => plane_to_fourier(z.plane(ic), g.height, g.width),
        InjectionMode::Spatial => z.plane(ic).iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    })
}

/// `σ² = (1/ΣM) Σ M|y|²`.
pub fn estimate_variance(y: &[Complex64], mask: &CircularMask) -> Result<f64> {
    if mask.cardinality() == 0 {
        return Err(Error::EmptyMask);
    }
    let s: f64 = mask.indices().iter().map(|&i| y[i].norm_sqr()).sum();
    Ok(s / mask.cardinality() as f64)
}

/// `η = (1/σ²) Σ |M⊙W − M⊙y|²`.
pub fn distance_score(y: &[Complex64], w: &[Complex64], mask: &CircularMask, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let s: f64 = mask.indices().iter().map(|&i| (w[i] - y[i]).norm_sqr()).sum();
    Ok(s / sigma2)
}

/// `λ = (1/σ²) Σ |M⊙W|²`.
pub fn noncentrality(w: &[Complex64], mask: &CircularMask, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok(mask.indices().iter().map(|&i| w[i].norm_sqr()).sum::<f64>() / sigma2)
}

/// Empirical null for one key. Conditional on the observed energy
/// `S = Σ_M |y|²`, `η` is a decreasing function of
/// `t = Re⟨W, y⟩ / √S`, so one sorted sample of `t` under the null serves
/// every observation and the resulting p-values are exactly uniform when
/// the observation follows the simulated null.
#[derive(Debug, Clone)]
pub struct NullCalibration {
    sorted: Vec<f64>,
}

const CHUNK: usize = 256;

impl NullCalibration {
    pub fn build(pattern: &KeyPattern, reference: &[Complex64], samples: usize, seed: u64, null: NullModel, exec: Exec) -> Self {
        let (h, w) = (pattern.mask.height(), pattern.mask.width());
        let chunks = samples.div_ceil(CHUNK);
        let parts = exec::map_range(exec, chunks, |ci| {
            let mut rng = ChaCha20Rng::seed_from_u64(exec::split_seed(seed, ci as u64));
            let n = CHUNK.min(samples - ci * CHUNK);
            let mut out = Vec::with_capacity(n);
            let mut buf = vec![Complex64::default(); pattern.mask.cardinality()];
            let mut plane = vec![0.0; h * w];
            for _ in 0..n {
                match null {
                    NullModel::WhiteLatent => {
                        plane.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                        let f = plane_to_fourier(&plane, h, w);
                        for (b, &i) in buf.iter_mut().zip(pattern.mask.indices()) {
                            *b = f[i];
                        }
                    }
                    NullModel::ComplexGaussian => {
                        let s = 0.5f64.sqrt();
                        for b in buf.iter_mut() {
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = rng.sample(StandardNormal);
                            *b = Complex64::new(s * re, s * im);
                        }
                    }
                }
                out.push(alignment(&buf, pattern.mask.indices(), reference));
            }
            out
        });
        let mut sorted: Vec<f64> = parts.into_iter().flatten().collect();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `(1 + #{t_sim ≥ t_obs}) / (n + 1)`.
    pub fn p_value(&self, t_obs: f64) -> f64 {
        let below = self.sorted.partition_point(|&t| t < t_obs);
        let at_least = self.sorted.len() - below;
        (1 + at_least) as f64 / (self.sorted.len() + 1) as f64
    }
}

/// `Re⟨W, y⟩ / ‖y‖` over the masked bins; `masked` is in mask order.
fn alignment(masked: &[Complex64], indices: &[usize], w: &[Complex64]) -> f64 {
    let mut dot = 0.0;
    let mut norm = 0.0;
    for (y, &i) in masked.iter().zip(indices) {
        dot += (w[i].conj() * y).re;
        norm += y.norm_sqr();
    }
    dot / norm.sqrt()
}

/// Key-bound detector. Builds the calibrated null once when needed.
pub struct Detector<'a> {
    backend: &'a DiffusionBackend,
    key: WatermarkKey,
    pattern: KeyPattern,
    reference: Vec<Complex64>,
    config: DetectConfig,
    calibration: Option<NullCalibration>,
}

impl<'a> Detector<'a> {
    pub fn new(backend: &'a DiffusionBackend, key: &WatermarkKey, config: DetectConfig) -> Result<Self> {
        config.validate()?;
        key.validate()?;
        key.latent_geometry.ensure_eq(&backend.latent_geometry())?;
        let pattern = KeyPattern::new(key)?;
        let reference: Vec<Complex64> = match config.domain {
            InjectionMode::Fourier => pattern.ring.values().to_vec(),
            InjectionMode::Spatial => pattern.ring.values().iter().map(|v| Complex64::new(v.re, 0.0)).collect(),
        };
        let calibration = match config.mode {
            DetectionMode::Calibrated { samples, seed, null } => {
                Some(NullCalibration::build(&pattern, &reference, samples, seed, null, config.exec))
            }
            DetectionMode::Analytic { .. } => None,
        };
        Ok(Self { backend, key: key.clone(), pattern, reference, config, calibration })
    }

    pub fn config(&self) -> &DetectConfig {
        &self.config
    }

    pub fn pattern(&self) -> &KeyPattern {
        &self.pattern
    }

    /// Reference values compared against the observation.
    pub fn reference(&self) -> &[Complex64] {
        &self.reference
    }

    /// Hypothesis test on an already extracted observation plane.
    pub fn test_observation(&self, y: &[Complex64]) -> Result<DetectionResult> {
        let mask = &self.pattern.mask;
        let sigma2 = estimate_variance(y, mask)?;
        let eta = distance_score(y, &self.reference, mask, sigma2)?;
        let lambda = noncentrality(&self.reference, mask, sigma2)?;
        let k = mask.cardinality();
        let p_value = match (self.config.mode, &self.calibration) {
            (DetectionMode::Analytic { parameterization: Parameterization::Complex }, _) => {
                noncentral_chi2_cdf(eta, k as f64, lambda)?
            }
            (DetectionMode::Analytic { parameterization: Parameterization::RealDimension }, _) => {
                noncentral_chi2_cdf(2.0 * eta, 2.0 * k as f64, 2.0 * lambda)?
            }
            (DetectionMode::Calibrated { .. }, Some(cal)) => {
                let masked: Vec<Complex64> = mask.indices().iter().map(|&i| y[i]).collect();
                cal.p_value(alignment(&masked, mask.indices(), &self.reference))
            }
            (DetectionMode::Calibrated { .. }, None) => unreachable!("calibration built in new"),
        };
        let score = 1.0 - p_value;
        Ok(DetectionResult {
            eta,
            sigma2,
            dof: k,
            lambda,
            p_value,
            score,
            detected: score > self.config.threshold,
            rotation_angle: None,
            degenerate: false,
        })
    }

    pub fn observe(&self, x: &Image) -> Result<Vec<Complex64>> {
        extract_observation(x, &self.key, self.backend, self.config.steps, self.config.domain)
    }

    /// Fails with [`Error::DegenerateVariance`] on zero-energy observations.
    pub fn detect(&self, x: &Image) -> Result<DetectionResult> {
        self.test_observation(&self.observe(x)?)
    }

    /// Like [`Detector::detect`], mapping a degenerate observation (zero
    /// variance, or a noncentrality too large to evaluate) to a flagged
    /// non-detection.
    pub fn detect_lenient(&self, x: &Image) -> Result<DetectionResult> {
        match self.detect(x) {
            Err(Error::DegenerateVariance | Error::NonConvergence(_)) => {
                Ok(DetectionResult::degenerate(self.pattern.mask.cardinality()))
            }
            other => other,
        }
    }

    /// Tries every rotation `0, step, …, 360 − step` and keeps the highest
    /// score (the first on ties).
    pub fn detect_with_rotation_correction(&self, x: &Image, step_degrees: f64) -> Result<DetectionResult> {
        if !(step_degrees > 0.0) || (360.0 / step_degrees).fract().abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("rotation step {step_degrees} does not divide 360")));
        }
        let n = (360.0 / step_degrees).round() as usize;
        let results = exec::map_range(self.config.exec, n, |i| {
            let angle = i as f64 * step_degrees;
            let rotated = if i == 0 { x.clone() } else { rotate(x, angle) };
            if rotated.geometry() != x.geometry() {
                return Ok(None);
            }
            self.detect_lenient(&rotated).map(|r| Some(DetectionResult { rotation_angle: Some(angle), ..r }))
        });
        let mut best: Option<DetectionResult> = None;
        for r in results {
            if let Some(r) = r? {
                if best.is_none_or(|b| r.score > b.score) {
                    best = Some(r);
                }
            }
        }
        best.ok_or_else(|| Error::InvalidParameter("no rotation preserved the image geometry".into()))
    }
}

/// One-shot detection without reusing a [`Detector`].
pub fn detect(
    x: &Image,
    key: &WatermarkKey,
    backend: &DiffusionBackend,
    config: &DetectConfig,
) -> Result<DetectionResult> {
    Detector::new(backend, key, *config)?.detect(x)
}

pub fn detect_with_rotation_correction(
    x: &Image,
    key: &WatermarkKey,
    backend: &DiffusionBackend,
    config: &DetectConfig,
    step_degrees: f64,
) -> Result<DetectionResult> {
    Detector::new(backend, key, *config)?.detect_with_rotation_correction(x, step_degrees)
}
