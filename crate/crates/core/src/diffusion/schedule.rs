use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a few-step sampler picks its timesteps out of the full schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    /// `t_i = i * (T / S) + 1` for `i in 0..S`, the usual latent-diffusion
    /// setting (integer stride, offset one).
    #[default]
    Leading,
    /// `t_i = T - round(i * T / S)`, always including `T`.
    Trailing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleKind {
    LinearBeta { beta_start: f64, beta_end: f64 },
    ConstantBeta { beta: f64 },
}

impl Default for ScheduleKind {
    fn default() -> Self {
        ScheduleKind::LinearBeta { beta_start: 0.00085, beta_end: 0.012 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    spacing: Spacing,
}

impl NoiseSchedule {
    pub fn new(steps: usize, kind: &ScheduleKind) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSchedule("T must be at least 1".into()));
        }
        let beta: Vec<f64> = match *kind {
            ScheduleKind::LinearBeta { beta_start, beta_end } => {
                let denom = (steps.max(2) - 1) as f64;
                (0..steps)
                    .map(|i| beta_start + (beta_end - beta_start) * i as f64 / denom)
                    .collect()
            }
            ScheduleKind::ConstantBeta { beta } => {
                // beta = 0 is accepted here as the degenerate identity chain
                if !(0.0..1.0).contains(&beta) {
                    return Err(Error::InvalidSchedule(format!("beta {beta} outside [0, 1)")));
                }
                return Self::from_betas_unchecked(vec![beta; steps]);
            }
        };
        Self::from_betas(beta)
    }

    /// Builds a schedule from explicit `β_1..β_T`, each strictly inside (0, 1).
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidSchedule(format!("beta {b} outside (0, 1)")));
        }
        Self::from_betas_unchecked(beta)
    }

    fn from_betas_unchecked(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidSchedule("T must be at least 1".into()));
        }
        let mut alpha_bar = Vec::with_capacity(beta.len() + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(Self { beta, alpha_bar, spacing: Spacing::Leading })
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// `T`.
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// `ᾱ_0..ᾱ_T`.
    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn alpha_bar_at(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Ascending timesteps visited by an `steps`-step sampler. Empty for
    /// `steps = 0`.
    pub fn timesteps(&self, steps: usize) -> Result<Vec<usize>> {
        let t = self.len();
        if steps > t {
            return Err(Error::InvalidParameter(format!(
                "{steps} sampling steps exceed the schedule length {t}"
            )));
        }
        if steps == 0 {
            return Ok(Vec::new());
        }
        let ts = match self.spacing {
            Spacing::Leading => {
                let stride = t / steps;
                (0..steps).map(|i| i * stride + 1).collect()
            }
            Spacing::Trailing => {
                let mut v: Vec<usize> = (0..steps)
                    .map(|i| t - ((i * t) as f64 / steps as f64).round() as usize)
                    .collect();
                v.reverse();
                v
            }
        };
        Ok(ts)
    }
}

/// Registry entry point: `kind` is `linear-beta` (params `beta_start`,
/// `beta_end`) or `constant-beta` (param `beta`).
pub fn make_schedule(t: usize, kind: &str, params: &BTreeMap<String, f64>) -> Result<NoiseSchedule> {
    let get = |name: &str, default: f64| params.get(name).copied().unwrap_or(default);
    let kind = match kind {
        "linear-beta" => ScheduleKind::LinearBeta {
            beta_start: get("beta_start", 0.00085),
            beta_end: get("beta_end", 0.012),
        },
        "constant-beta" => ScheduleKind::ConstantBeta { beta: get("beta", 0.02) },
        other => return Err(Error::UnknownSchedule(other.to_string())),
    };
    NoiseSchedule::new(t, &kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_constant_schedule_is_identity() {
        let s = NoiseSchedule::new(3, &ScheduleKind::ConstantBeta { beta: 0.0 }).unwrap();
        assert_eq!(s.alpha_bar(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_step_product() {
        let s = NoiseSchedule::from_betas(vec![0.1, 0.1]).unwrap();
        let ab = s.alpha_bar();
        assert_eq!(ab[0], 1.0);
        assert!((ab[1] - 0.9).abs() < 1e-15);
        assert!((ab[2] - 0.81).abs() < 1e-15);
    }

    #[test]
    fn product_matches_log_sum() {
        let s = make_schedule(1000, "linear-beta", &BTreeMap::new()).unwrap();
        let log_sum: f64 = (0..1000)
            .map(|i| (1.0 - (0.00085 + (0.012 - 0.00085) * i as f64 / 999.0)).ln())
            .sum();
        let oracle = log_sum.exp();
        let got = s.alpha_bar_at(1000);
        assert!(((got - oracle) / oracle).abs() < 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            make_schedule(10, "cosine", &BTreeMap::new()),
            Err(Error::UnknownSchedule(_))
        ));
        assert!(NoiseSchedule::from_betas(vec![0.1, 1.0]).is_err());
        assert!(NoiseSchedule::from_betas(vec![0.0]).is_err());
        assert!(NoiseSchedule::new(0, &ScheduleKind::default()).is_err());
    }

    #[test]
    fn leading_timesteps() {
        let s = make_schedule(1000, "linear-beta", &BTreeMap::new()).unwrap();
        let ts = s.timesteps(50).unwrap();
        assert_eq!(ts.len(), 50);
        assert_eq!(ts[0], 1);
        assert_eq!(ts[49], 981);
        assert_eq!(s.timesteps(1).unwrap(), vec![1]);
        assert_eq!(s.timesteps(1000).unwrap(), (1..=1000).collect::<Vec<_>>());
        assert!(s.timesteps(0).unwrap().is_empty());
        assert!(s.timesteps(1001).is_err());
    }

    #[test]
    fn trailing_timesteps_reach_the_end() {
        let s = make_schedule(1000, "linear-beta", &BTreeMap::new())
            .unwrap()
            .with_spacing(Spacing::Trailing);
        let ts = s.timesteps(50).unwrap();
        assert_eq!(*ts.last().unwrap(), 1000);
        assert_eq!(ts[0], 20);
        assert_eq!(s.timesteps(1).unwrap(), vec![1000]);
    }

    proptest! {
        #[test]
        fn alpha_bar_strictly_decreasing(betas in prop::collection::vec(1e-6f64..0.5, 1..200)) {
            let s = NoiseSchedule::from_betas(betas).unwrap();
            let ab = s.alpha_bar();
            prop_assert_eq!(ab[0], 1.0);
            for w in ab.windows(2) {
                prop_assert!(w[1] < w[0]);
                prop_assert!(w[1] > 0.0 && w[1] <= 1.0);
            }
        }

        #[test]
        fn timesteps_strictly_increasing(t in 1usize..1200, frac in 0.0f64..1.0) {
            let s = NoiseSchedule::new(t, &ScheduleKind::default()).unwrap();
            let steps = ((t as f64) * frac) as usize;
            for sp in [Spacing::Leading, Spacing::Trailing] {
                let ts = s.clone().with_spacing(sp).timesteps(steps).unwrap();
                prop_assert_eq!(ts.len(), steps);
                prop_assert!(ts.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(ts.iter().all(|&x| x >= 1 && x <= t));
            }
        }
    }
}
