//! Small statistical helpers for calibration checks.

use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

use crate::error::{Error, Result};

/// One-sample Kolmogorov–Smirnov statistic against Uniform(0, 1).
pub fn ks_uniform(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max);
    Ok(d)
}

/// Critical value of the KS statistic at significance `alpha` (0.10, 0.05,
/// 0.025 or 0.01), using Stephens' finite-sample correction.
pub fn ks_critical(n: usize, alpha: f64) -> Result<f64> {
    let c = match alpha {
        a if (a - 0.10).abs() < 1e-12 => 1.224,
        a if (a - 0.05).abs() < 1e-12 => 1.358,
        a if (a - 0.025).abs() < 1e-12 => 1.480,
        a if (a - 0.01).abs() < 1e-12 => 1.628,
        _ => return Err(Error::InvalidParameter(format!("no KS table entry for alpha {alpha}"))),
    };
    let sn = (n as f64).sqrt();
    Ok(c / (sn + 0.12 + 0.11 / sn))
}

/// Central `level` acceptance region `[lo, hi]` for the number of successes
/// of Binomial(n, p): `P(X < lo) ≤ (1−level)/2` and `P(X > hi) ≤ (1−level)/2`.
pub fn binomial_acceptance(n: u64, p: f64, level: f64) -> Result<(u64, u64)> {
    let b = Binomial::new(p, n).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let tail = (1.0 - level) / 2.0;
    let mut lo = 0;
    while lo < n && b.cdf(lo) <= tail {
        lo += 1;
    }
    let mut hi = n;
    while hi > 0 && b.sf(hi - 1) <= tail {
        hi -= 1;
    }
    Ok((lo, hi))
}

/// Exact (Clopper–Pearson) two-sided confidence interval for a proportion.
pub fn clopper_pearson(successes: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n == 0 || successes > n {
        return Err(Error::InvalidParameter(format!("{successes} successes of {n}")));
    }
    let a = (1.0 - level) / 2.0;
    let k = successes as f64;
    let nf = n as f64;
    let beta = |x: f64, y: f64| Beta::new(x, y).map_err(|e| Error::InvalidParameter(e.to_string()));
    let lo = if successes == 0 { 0.0 } else { beta(k, nf - k + 1.0)?.inverse_cdf(a) };
    let hi = if successes == n { 1.0 } else { beta(k + 1.0, nf - k)?.inverse_cdf(1.0 - a) };
    Ok((lo, hi))
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}
