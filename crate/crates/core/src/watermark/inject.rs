use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fourier::{from_fourier_real_part, plane_from_fourier, plane_to_fourier, to_fourier, FourierLatent};
use crate::tensor::Latent;
use crate::watermark::key::WatermarkKey;
use crate::watermark::ring::KeyPattern;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    #[default]
    Fourier,
    Spatial,
}

/// `F[ic] ← (1 − M)⊙F[ic] + M⊙W`; other channels untouched.
pub fn inject(f: &FourierLatent, key: &WatermarkKey) -> Result<FourierLatent> {
    key.latent_geometry.ensure_eq(&f.geometry())?;
    let p = KeyPattern::new(key)?;
    let mut out = f.clone();
    let plane = out.plane_mut(p.channel);
    for &i in p.mask.indices() {
        plane[i] = p.ring.values()[i];
    }
    Ok(out)
}

/// Same overwrite rule applied to the spatial values of channel `ic`, using
/// the real part of each ring value.
pub fn inject_spatial(z: &Latent, key: &WatermarkKey) -> Result<Latent> {
    key.latent_geometry.ensure_eq(&z.geometry())?;
    let p = KeyPattern::new(key)?;
    let mut out = z.clone();
    let plane = out.plane_mut(p.channel);
    for &i in p.mask.indices() {
        plane[i] = p.ring.values()[i].re;
    }
    Ok(out)
}

/// Result of mapping a latent to `Z ⊕ W`.
#[derive(Debug, Clone)]
pub struct Injected {
    pub latent: Latent,
    /// Largest imaginary magnitude dropped by the real projection.
    pub residue: f64,
}

/// Precomputed injection operator for one key, with its adjoint.
///
/// In Fourier mode the injected spectrum is generally not conjugate
/// symmetric, so the inverse transform keeps the real part. The masked bins
/// of the resulting latent then hold `Re(W)` regardless of the input, which
/// keeps them pinned while the rest of the latent is optimized.
#[derive(Debug, Clone)]
pub struct Injector {
    pattern: KeyPattern,
    mode: InjectionMode,
}

impl Injector {
    pub fn new(key: &WatermarkKey, mode: InjectionMode) -> Result<Self> {
        Ok(Self { pattern: KeyPattern::new(key)?, mode })
    }

    pub fn pattern(&self) -> &KeyPattern {
        &self.pattern
    }

    pub fn mode(&self) -> InjectionMode {
        self.mode
    }

    pub fn apply(&self, z: &Latent) -> Injected {
        let p = &self.pattern;
        match self.mode {
            InjectionMode::Spatial => {
                let mut out = z.clone();
                let plane = out.plane_mut(p.channel);
                for &i in p.mask.indices() {
                    plane[i] = p.ring.values()[i].re;
                }
                Injected { latent: out, residue: 0.0 }
            }
            InjectionMode::Fourier => {
                let mut f = to_fourier(z);
                let plane = f.plane_mut(p.channel);
                for &i in p.mask.indices() {
                    plane[i] = p.ring.values()[i];
                }
                let (latent, residue) = from_fourier_real_part(&f);
                Injected { latent, residue }
            }
        }
    }

    /// Adjoint of the linear part of [`Injector::apply`]: the cotangent on
    /// masked entries is dropped.
    pub fn vjp(&self, upstream: &Latent) -> Latent {
        let p = &self.pattern;
        let g = upstream.geometry();
        let mut out = upstream.clone();
        match self.mode {
            InjectionMode::Spatial => {
                let plane = out.plane_mut(p.channel);
                for &i in p.mask.indices() {
                    plane[i] = 0.0;
                }
            }
            InjectionMode::Fourier => {
                let mut f = plane_to_fourier(upstream.plane(p.channel), g.height, g.width);
                for &i in p.mask.indices() {
                    f[i] = Complex64::default();
                }
                let back = plane_from_fourier(&f, g.height, g.width);
                for (o, v) in out.plane_mut(p.channel).iter_mut().zip(&back) {
                    *o = v.re;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Geometry;
    use crate::watermark::key::generate_key;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const G: Geometry = Geometry::new(4, 32, 32);

    fn latent(seed: u64) -> Latent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Latent::from_fn(G, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn inject_by_cases() {
        let key = generate_key(1, 6, -1, G).unwrap();
        let p = KeyPattern::new(&key).unwrap();
        let f = to_fourier(&latent(2));
        let out = inject(&f, &key).unwrap();
        for c in 0..4 {
            for i in 0..G.plane_len() {
                let want = if c == 3 && p.mask.bits()[i] { p.ring.values()[i] } else { f.plane(c)[i] };
                assert_eq!(out.plane(c)[i], want);
            }
        }
        assert_eq!(inject(&out, &key).unwrap(), out);
    }

    #[test]
    fn spatial_injection_reads_back_real_parts() {
        let key = generate_key(3, 6, 1, G).unwrap();
        let p = KeyPattern::new(&key).unwrap();
        let z = latent(4);
        let out = inject_spatial(&z, &key).unwrap();
        for i in 0..G.plane_len() {
            let want = if p.mask.bits()[i] { p.ring.values()[i].re } else { z.plane(1)[i] };
            assert_eq!(out.plane(1)[i], want);
        }
        assert_eq!(out.plane(0), z.plane(0));
        let (fourier, _) = from_fourier_real_part(&inject(&to_fourier(&z), &key).unwrap());
        assert!(fourier.max_abs_diff(&out) > 1e-3);
    }

    #[test]
    fn geometry_mismatch() {
        let key = generate_key(1, 4, -1, G).unwrap();
        let other = Latent::zeros(Geometry::new(4, 16, 16));
        assert!(inject_spatial(&other, &key).is_err());
        assert!(inject(&to_fourier(&other), &key).is_err());
    }

    #[test]
    fn projected_bins_are_pinned_to_real_part() {
        let key = generate_key(5, 6, -1, G).unwrap();
        let inj = Injector::new(&key, InjectionMode::Fourier).unwrap();
        let a = inj.apply(&latent(6));
        let b = inj.apply(&latent(7));
        assert!(a.residue > 1e-6);
        let fa = to_fourier(&a.latent);
        let fb = to_fourier(&b.latent);
        for (k, &i) in inj.pattern().mask.indices().iter().enumerate() {
            let w = inj.pattern().ring.values()[i];
            assert!((fa.plane(3)[i] - Complex64::new(w.re, 0.0)).norm() < 1e-12, "bin {k}");
            assert!((fa.plane(3)[i] - fb.plane(3)[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn vjp_is_adjoint_of_linear_part() {
        let key = generate_key(8, 5, -1, G).unwrap();
        for mode in [InjectionMode::Fourier, InjectionMode::Spatial] {
            let inj = Injector::new(&key, mode).unwrap();
            let zero = inj.apply(&Latent::zeros(G)).latent;
            let x = latent(9);
            let u = latent(10);
            let mut lin = inj.apply(&x).latent;
            lin.axpy(-1.0, &zero);
            let lhs = lin.dot(&u);
            let rhs = x.dot(&inj.vjp(&u));
            assert!((lhs - rhs).abs() < 1e-9, "{mode:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn changes_stay_inside_the_mask(seed in any::<u64>(), radius in 0usize..15, ch in 0i64..4) {
            let key = generate_key(seed, radius, ch, G).unwrap();
            let p = KeyPattern::new(&key).unwrap();
            let f = to_fourier(&latent(seed ^ 1));
            let out = inject(&f, &key).unwrap();
            let changed = (0..G.plane_len()).filter(|&i| out.plane(p.channel)[i] != f.plane(p.channel)[i]).count();
            prop_assert!(changed <= p.mask.cardinality());
            for c in (0..4).filter(|&c| c != p.channel) {
                prop_assert_eq!(out.plane(c), f.plane(c));
            }
        }
    }
}
