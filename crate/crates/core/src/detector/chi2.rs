//! Non-central chi-squared CDF as a Poisson mixture of central CDFs.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

const TERM_BUDGET: usize = 200_000;
/// Poisson standard deviations covered on each side of the mode.
const SPREAD: f64 = 10.0;
const TAIL_TOL: f64 = 1e-15;
/// Terms between exact re-evaluations of the recurrences.
const REFRESH: usize = 64;

/// `P(X ≤ x)` for `X ~ χ²_k(λ)`:
/// `Σ_j Pois(j; λ/2) · P(χ²_{k+2j} ≤ x)`, summed outward from the Poisson
/// mode until the remaining terms are negligible relative to the sum.
///
/// Neighbouring central terms follow
/// `P(a+1, y) = P(a, y) − yᵃe⁻ʸ/Γ(a+1)` in the regularized lower
/// incomplete gamma `P`, re-anchored every few terms. Accuracy is that of
/// the underlying `P`, which degrades for `k/2 + λ/2` beyond about 10⁶.
pub fn noncentral_chi2_cdf(x: f64, k: f64, lambda: f64) -> Result<f64> {
    if !(k > 0.0) || !(lambda >= 0.0) || x.is_nan() || lambda.is_infinite() {
        return Err(Error::InvalidParameter(format!("χ² parameters x={x}, k={k}, λ={lambda}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let hx = 0.5 * x;
    let hk = 0.5 * k;
    if lambda == 0.0 {
        return Ok(gamma_lr(hk, hx));
    }
    let mu = 0.5 * lambda;
    if 2.0 * SPREAD * mu.sqrt() > TERM_BUDGET as f64 {
        return Err(Error::NonConvergence(TERM_BUDGET));
    }
    let log_w = |j: f64| -mu + j * mu.ln() - ln_gamma(j + 1.0);
    // yᵃe⁻ʸ/Γ(a+1)
    let step = |a: f64| (a * hx.ln() - hx - ln_gamma(a + 1.0)).exp();
    let negligible = |tail: f64, sum: f64| tail < TAIL_TOL * sum || tail < f64::MIN_POSITIVE;
    let mode = mu.floor();
    let mut sum = 0.0;
    let mut terms = 0;

    // upward: P(a, y) falls with a, so the current factor bounds the rest
    let (mut j, mut w, mut f, mut d) = (mode, log_w(mode).exp(), gamma_lr(hk + mode, hx), step(hk + mode));
    loop {
        sum += w * f;
        terms += 1;
        let ratio = mu / (j + 1.0);
        if ratio < 1.0 && negligible(w * ratio / (1.0 - ratio) * f, sum) {
            break;
        }
        if terms > TERM_BUDGET {
            return Err(Error::NonConvergence(TERM_BUDGET));
        }
        let a = hk + j;
        f = (f - d).max(0.0);
        d *= hx / (a + 1.0);
        w *= ratio;
        j += 1.0;
        if terms % REFRESH == 0 {
            w = log_w(j).exp();
            f = gamma_lr(hk + j, hx);
            d = step(hk + j);
        }
    }

    // downward: the j = 0 factor bounds the rest
    let f_max = gamma_lr(hk, hx);
    let (mut j, mut w, mut f, mut d) = (mode, log_w(mode).exp(), gamma_lr(hk + mode, hx), step(hk + mode - 1.0));
    let mut down = 0;
    while j >= 1.0 {
        let a = hk + j;
        f += d;
        d *= (a - 1.0) / hx;
        w *= j / mu;
        j -= 1.0;
        down += 1;
        if down % REFRESH == 0 {
            w = log_w(j).exp();
            f = gamma_lr(hk + j, hx);
            d = step(hk + j - 1.0);
        }
        sum += w * f.min(1.0);
        terms += 1;
        let ratio = j / mu;
        if ratio < 1.0 && negligible(w * ratio / (1.0 - ratio) * f_max, sum) {
            break;
        }
        if terms > TERM_BUDGET {
            return Err(Error::NonConvergence(TERM_BUDGET));
        }
    }
    Ok(sum.clamp(0.0, 1.0))
}
