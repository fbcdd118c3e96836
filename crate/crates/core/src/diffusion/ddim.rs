//! Deterministic DDIM sampling, inversion and the reverse-mode pass through
//! the sampling chain.

use crate::diffusion::backend::NoisePredictor;
use crate::diffusion::schedule::NoiseSchedule;
use crate::tensor::Latent;

/// Coefficients of one denoising step `x_prev = a * x + b * ε(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub a: f64,
    pub b: f64,
}

impl StepCoefficients {
    pub fn denoise(ab_t: f64, ab_prev: f64) -> Self {
        let a = (ab_prev / ab_t).sqrt();
        let b = (1.0 - ab_prev).sqrt() - ab_prev.sqrt() * (1.0 - ab_t).sqrt() / ab_t.sqrt();
        Self { a, b }
    }

    /// Step from `t_prev` up to `t`, `x_t = a * x_prev + b * ε`.
    pub fn invert(ab_t: f64, ab_prev: f64) -> Self {
        let a = (ab_t / ab_prev).sqrt();
        let b = (1.0 - ab_t).sqrt() - ab_t.sqrt() * (1.0 - ab_prev).sqrt() / ab_prev.sqrt();
        Self { a, b }
    }
}

/// `(t, t_prev)` pairs visited while denoising, highest `t` first.
pub fn denoise_pairs(timesteps: &[usize]) -> Vec<(usize, usize)> {
    (0..timesteps.len())
        .rev()
        .map(|i| (timesteps[i], if i == 0 { 0 } else { timesteps[i - 1] }))
        .collect()
}

fn step(x: &Latent, eps: &Latent, c: StepCoefficients) -> Latent {
    let mut out = x.clone();
    out.scale(c.a);
    out.axpy(c.b, eps);
    out
}

/// Runs the denoising chain over explicit ascending timesteps.
pub fn denoise_over(
    z: &Latent,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    timesteps: &[usize],
) -> Latent {
    let mut x = z.clone();
    for (t, tp) in denoise_pairs(timesteps) {
        let eps = predictor.predict(&x, t);
        x = step(&x, &eps, StepCoefficients::denoise(schedule.alpha_bar_at(t), schedule.alpha_bar_at(tp)));
    }
    x
}

/// Naive DDIM inversion: the noise at each upward step is predicted from the
/// current (lower-noise) latent at the target timestep.
pub fn invert_over(
    z: &Latent,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    timesteps: &[usize],
) -> Latent {
    let mut x = z.clone();
    let mut prev = 0;
    for &t in timesteps {
        let eps = predictor.predict(&x, t);
        x = step(&x, &eps, StepCoefficients::invert(schedule.alpha_bar_at(t), schedule.alpha_bar_at(prev)));
        prev = t;
    }
    x
}

/// Forward pass that keeps each step input for [`DenoiseTrace::vjp`].
#[derive(Debug, Clone)]
pub struct DenoiseTrace {
    inputs: Vec<(Latent, usize, StepCoefficients)>,
    pub output: Latent,
}

impl DenoiseTrace {
    pub fn run(
        z: &Latent,
        predictor: &dyn NoisePredictor,
        schedule: &NoiseSchedule,
        timesteps: &[usize],
    ) -> Self {
        let mut inputs = Vec::with_capacity(timesteps.len());
        let mut x = z.clone();
        for (t, tp) in denoise_pairs(timesteps) {
            let c = StepCoefficients::denoise(schedule.alpha_bar_at(t), schedule.alpha_bar_at(tp));
            let eps = predictor.predict(&x, t);
            let next = step(&x, &eps, c);
            inputs.push((x, t, c));
            x = next;
        }
        Self { inputs, output: x }
    }

    /// Pulls a cotangent on the output back to the chain input.
    pub fn vjp(&self, predictor: &dyn NoisePredictor, upstream: &Latent) -> Latent {
        let mut g = upstream.clone();
        for (x, t, c) in self.inputs.iter().rev() {
            let jt = predictor.vjp(x, *t, &g);
            g.scale(c.a);
            g.axpy(c.b, &jt);
        }
        g
    }
}
