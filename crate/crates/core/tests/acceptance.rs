//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. A positional argument filters criteria
//! by name.

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, StandardNormal};
use rustfft::num_complex::Complex64;
use statrs::function::erf::erfc;

use ringmark::attacks::{apply_pipeline, preset, AttackContext, AttackRegistry, AttackSpec, PipelineRef};
use ringmark::detector::{
    noncentral_chi2_cdf, DetectConfig, DetectionMode, DetectionResult, Detector, NullModel, Parameterization,
};
use ringmark::diffusion::ddim::{denoise_over, DenoiseTrace};
use ringmark::diffusion::toy::{LinearPredictor, TanhPredictor};
use ringmark::diffusion::{build_backend, BackendConfig, DiffusionBackend, NoisePredictor, NoiseSchedule, ScheduleKind};
use ringmark::embedder::{blend, embed, reconstruction_loss_with_grad, EmbedConfig, EmbedResult};
use ringmark::evalkit::corpus::{pristine_corpus, toy_corpus, CorpusSpec};
use ringmark::evalkit::ssim;
use ringmark::evalkit::stats::{binomial_acceptance, ks_critical, ks_uniform};
use ringmark::evalkit::sweep::{run_sweep, EmbedCache, SweepConfig, SweepInputs};
use ringmark::exec::{map_slice, split_seed};
use ringmark::watermark::{expand_watermark, generate_key, make_mask, WatermarkKey};
use ringmark::{Exec, Geometry, Image, Latent};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion = (&'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    ("detector-calibration", detector_calibration),
    ("chi2-oracle", chi2_oracle),
    ("ring-mask-oracle", ring_mask_oracle),
    ("inversion-round-trip", inversion_round_trip),
    ("zero-attack-detection", zero_attack_detection),
    ("robustness-trend", robustness_trend),
    ("rotation-correction", rotation_correction),
    ("enhancement-contract", enhancement_contract),
    ("gradient-checks", gradient_checks),
    ("composite-order", composite_order),
];

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in CRITERIA.iter().enumerate() {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let o = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {name}: {} [{:.1?}]", i + 1, o.detail, t.elapsed());
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn cn(rng: &mut ChaCha20Rng, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    Complex64::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
}

fn detector_calibration() -> Outcome {
    let t = Instant::now();
    let backend = build_backend(&BackendConfig::default()).unwrap();
    let key = generate_key(3, 10, -1, backend.latent_geometry()).unwrap();
    let samples = 10_000;
    let mode = DetectionMode::Calibrated { samples, seed: 17, null: NullModel::ComplexGaussian };
    let threshold = 0.90;
    let d = Detector::new(&backend, &key, DetectConfig { mode, threshold, ..DetectConfig::default() }).unwrap();
    let analytic = |p| Detector::new(&backend, &key, DetectConfig { mode: DetectionMode::Analytic { parameterization: p }, ..DetectConfig::default() }).unwrap();
    let real = analytic(Parameterization::RealDimension);
    let n = 1000;
    let plane = backend.latent_geometry().plane_len();
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut ps = Vec::with_capacity(n);
    let mut real_ps = Vec::with_capacity(n);
    let mut false_pos = 0u64;
    for _ in 0..n {
        let y: Vec<Complex64> = (0..plane).map(|_| cn(&mut rng, 2.5)).collect();
        let r = d.test_observation(&y).unwrap();
        false_pos += r.detected as u64;
        ps.push(r.p_value);
        real_ps.push(real.test_observation(&y).unwrap().p_value);
    }
    let ks = ks_uniform(&ps).unwrap();
    let crit = ks_critical(n, 0.01).unwrap();
    // rank of the observation among the null sample is uniform on 0..=samples
    let expected = (0..=samples)
        .filter(|&a| 1.0 - (1 + a) as f64 / (samples + 1) as f64 > threshold)
        .count() as f64
        / (samples + 1) as f64;
    let (lo, hi) = binomial_acceptance(n as u64, expected, 0.99).unwrap();
    let elapsed = t.elapsed();
    let pass = ks < crit && (lo..=hi).contains(&false_pos) && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "KS D={ks:.4} (crit {crit:.4}); FPR {false_pos}/{n} in [{lo}, {hi}] around {expected:.4}; runtime {elapsed:.1?} < 60s; info: real-dimension analytic KS D={:.4}",
            ks_uniform(&real_ps).unwrap()
        ),
    )
}

/// `P(χ²_k ≤ x)` by the finite series for integer `k`.
fn central_closed_form(x: f64, k: u32) -> f64 {
    let y = 0.5 * x;
    let mut q;
    let mut term;
    let (start, count) = if k.is_multiple_of(2) {
        q = 0.0;
        term = (-y).exp();
        (1.0, k / 2)
    } else {
        q = erfc(y.sqrt());
        term = (-y).exp() * y.sqrt() * 2.0 / std::f64::consts::PI.sqrt();
        (1.5, (k - 1) / 2)
    };
    for i in 0..count {
        q += term;
        term *= y / (start + i as f64);
    }
    1.0 - q
}

fn chi2_oracle() -> Outcome {
    let t = Instant::now();
    let mut worst_central: f64 = 0.0;
    for k in [1u32, 2, 3, 4, 7, 10, 63, 317] {
        for f in [0.1, 0.5, 0.9, 1.0, 1.3, 2.0] {
            let x = f * k as f64;
            let got = noncentral_chi2_cdf(x, k as f64, 0.0).unwrap();
            worst_central = worst_central.max((got - central_closed_form(x, k)).abs());
        }
    }
    let n = 10_000_000;
    let pairs = [(1.0, 0.5), (4.0, 5.0), (10.0, 30.0), (63.0, 20.0), (317.0, 634.0)];
    let mut worst_z: f64 = 0.0;
    let mut points = 0;
    let mut samples = vec![0.0; n];
    for (pi, &(k, lambda)) in pairs.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(split_seed(77, pi as u64));
        let shift = f64::sqrt(lambda);
        let rest = (k > 1.0).then(|| ChiSquared::new(k - 1.0).unwrap());
        for s in samples.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *s = (z + shift).powi(2) + rest.map_or(0.0, |c| rng.sample(c));
        }
        samples.sort_by(|a, b| a.total_cmp(b));
        let mean = k + lambda;
        let sd = (2.0 * (k + 2.0 * lambda)).sqrt();
        for c in [-1.0, -0.3, 0.4, 1.5] {
            let x = (mean + c * sd).max(0.05 * mean);
            let emp = samples.partition_point(|&s| s <= x) as f64 / n as f64;
            let se = (emp * (1.0 - emp) / n as f64).sqrt();
            let got = noncentral_chi2_cdf(x, k, lambda).unwrap();
            worst_z = worst_z.max((got - emp).abs() / se);
            points += 1;
        }
    }
    let elapsed = t.elapsed();
    let pass = worst_z <= 3.0 && worst_central < 1e-10 && points == 20 && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!("{points} grid points vs {n}-sample Monte Carlo, worst |Δ|/SE = {worst_z:.2} ≤ 3; λ=0 worst abs error {worst_central:.1e} < 1e-10; runtime {elapsed:.1?} < 300s"),
    )
}

fn ring_mask_oracle() -> Outcome {
    let g = Geometry::new(4, 64, 64);
    let key = generate_key(11, 10, -1, g).unwrap();
    let mask = make_mask(g, 10);
    let ring = expand_watermark(&key).unwrap();
    let mut count = 0;
    let mut mismatches = 0;
    for r in 0..64 {
        for c in 0..64 {
            let d = ((r as f64 - 32.0).powi(2) + (c as f64 - 32.0).powi(2)).sqrt();
            let inside = d <= 10.0;
            let want = if inside {
                let [re, im] = key.ring_values[d.ceil() as usize];
                Complex64::new(re, im)
            } else {
                Complex64::default()
            };
            count += inside as usize;
            if mask.contains(r, c) != inside || ring.at(r, c) != want {
                mismatches += 1;
            }
        }
    }
    let pass = mismatches == 0 && count == mask.cardinality() && count == 317;
    outcome(pass, format!("cardinality {} (oracle {count}), {mismatches} mismatched points", mask.cardinality()))
}

fn random_latent(g: Geometry, seed: u64) -> Latent {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Latent::from_fn(g, |_, _, _| rng.sample(StandardNormal))
}

fn inversion_round_trip() -> Outcome {
    let steps = 50;
    let zero = build_backend(&BackendConfig::named("zero")).unwrap();
    let ts = zero.schedule().timesteps(steps).unwrap();
    let root = zero.schedule().alpha_bar_at(*ts.last().unwrap()).sqrt();
    let z = random_latent(zero.latent_geometry(), 1);
    let rel = |a: &Latent, b: &Latent| a.max_abs_diff(b) / b.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scaled = Latent(z.map(|v| root * v));
    let unscaled = Latent(z.map(|v| v / root));
    let x = Image(z.map(|v| v.tanh()));
    let inv = rel(&zero.ddim_invert(&z, steps).unwrap(), &scaled);
    let den = rel(&zero.ddim_denoise(&z, steps).unwrap(), &unscaled);
    let enc = rel(&zero.image_to_noise(&x, steps).unwrap(), &Latent(x.map(|v| root * v)));
    let dec = rel(&Latent(zero.noise_to_image(&z, steps).unwrap().0), &unscaled);
    let closed = inv.max(den).max(enc).max(dec);

    let mut cfg = BackendConfig::named("linear").with_timesteps(4).with_latent_size(32);
    cfg.coefficient = Some(0.1);
    let linear = build_backend(&cfg).unwrap();
    let z = random_latent(linear.latent_geometry(), 2);
    let rt = linear.ddim_denoise(&linear.ddim_invert(&z, 4).unwrap(), 4).unwrap();
    let err = rt.max_abs_diff(&z);
    let pass = closed < 1e-13 && err < 1e-4;
    outcome(
        pass,
        format!("zero backend closed forms (√ᾱ_T = {root:.6}) worst relative error {closed:.1e}; linear backend (c = 0.1, T = 4, 4×32×32) denoise∘invert max error {err:.2e} < 1e-4"),
    )
}

struct Variant {
    steps: usize,
    embeds: Vec<EmbedResult>,
    analytic: Vec<DetectionResult>,
    calibrated: Vec<DetectionResult>,
}

struct Fixture {
    backend: DiffusionBackend,
    key: WatermarkKey,
    images: Vec<Image>,
    pristine: Vec<Image>,
    full: Variant,
    codec_only: Variant,
    build_time: Duration,
}

fn calibrated_mode() -> DetectionMode {
    DetectionMode::calibrated(10_000, 41)
}

fn detector<'a>(f: &'a Fixture, steps: usize, mode: DetectionMode, threshold: f64) -> Detector<'a> {
    Detector::new(&f.backend, &f.key, DetectConfig { steps, mode, threshold, ..DetectConfig::default() }).unwrap()
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let t = Instant::now();
        let backend = build_backend(&BackendConfig::default()).unwrap();
        let key = generate_key(2718, 10, -1, backend.latent_geometry()).unwrap();
        let images = toy_corpus(&backend, &CorpusSpec { count: 20, seed: 5, ..CorpusSpec::default() }, Exec::Parallel).unwrap();
        let pristine = pristine_corpus(&backend, &CorpusSpec { count: 100, seed: 5, ..CorpusSpec::default() }, Exec::Parallel).unwrap();
        let variant = |steps: usize| {
            let cfg = EmbedConfig { steps, ..EmbedConfig::default() };
            let embeds: Vec<EmbedResult> =
                map_slice(Exec::Parallel, &images, |x| embed(x, &key, &backend, &cfg).unwrap());
            let detect = |mode| {
                let d = Detector::new(&backend, &key, DetectConfig { steps, mode, ..DetectConfig::default() }).unwrap();
                map_slice(Exec::Parallel, &embeds, |e| d.detect(&e.watermarked).unwrap())
            };
            Variant { steps, analytic: detect(DetectionMode::default()), calibrated: detect(calibrated_mode()), embeds }
        };
        let full = variant(50);
        let codec_only = variant(0);
        Fixture { backend, key, images, pristine, full, codec_only, build_time: t.elapsed() }
    })
}

fn rate(results: &[DetectionResult], threshold: f64) -> f64 {
    results.iter().filter(|r| r.score > threshold).count() as f64 / results.len() as f64
}

fn zero_attack_detection() -> Outcome {
    let t = Instant::now();
    let f = fixture();
    let threshold = 0.90;
    let pristine = |mode| {
        let d = detector(f, 50, mode, threshold);
        let pr: Vec<DetectionResult> = map_slice(Exec::Parallel, &f.pristine, |x| d.detect_lenient(x).unwrap());
        pr
    };
    // the default detector carries the criterion
    let wdr = rate(&f.full.analytic, threshold);
    let fpr = rate(&pristine(DetectionMode::default()), threshold);
    // an exactly calibrated test has expected FPR 1 − p*; check consistency
    let cal_wdr = rate(&f.full.calibrated, threshold);
    let cal_pr = pristine(calibrated_mode());
    let cal_fp = cal_pr.iter().filter(|r| r.score > threshold).count() as u64;
    let (lo, hi) = binomial_acceptance(cal_pr.len() as u64, 1.0 - threshold, 0.99).unwrap();
    let elapsed = t.elapsed().max(f.build_time);
    let pass = wdr >= 0.95 && fpr <= 0.10 && cal_wdr >= 0.95 && (lo..=hi).contains(&cal_fp) && elapsed < Duration::from_secs(1200);
    outcome(
        pass,
        format!(
            "{} images, {} pristine, p* = {threshold}; default detector: WDR {wdr:.2} ≥ 0.95, FPR {fpr:.2} ≤ 0.10; calibrated: WDR {cal_wdr:.2} ≥ 0.95, FPR {cal_fp}/{} in binomial 99% interval [{lo}, {hi}] around 0.10; runtime {elapsed:.1?}",
            f.images.len(),
            f.pristine.len(),
            cal_pr.len()
        ),
    )
}

/// `−log₁₀ p`, order-equivalent to the score `1 − p` without rounding at 1.
fn strength(r: &DetectionResult) -> f64 {
    -r.p_value.max(f64::MIN_POSITIVE).log10()
}

fn attacked_strengths(f: &Fixture, v: &Variant, spec: &AttackSpec, mode: DetectionMode) -> Vec<f64> {
    let registry = AttackRegistry::with_builtins();
    let d = detector(f, v.steps, mode, 0.90);
    let indexed: Vec<(usize, &EmbedResult)> = v.embeds.iter().enumerate().collect();
    map_slice(Exec::Parallel, &indexed, |(i, e)| {
        let ctx = AttackContext::new(split_seed(99, *i as u64)).with_backend(&f.backend);
        let x = registry.apply(&e.watermarked, spec, &ctx).unwrap();
        strength(&d.detect_lenient(&x).unwrap())
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn robustness_trend() -> Outcome {
    let f = fixture();
    let attacks = [
        AttackSpec::new("gaussian_noise").with("std", 0.05),
        AttackSpec::new("toy_regeneration").with("steps", 60.0),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in &attacks {
        for (mode_name, mode) in [("analytic", DetectionMode::default()), ("calibrated", calibrated_mode())] {
            let a = attacked_strengths(f, &f.full, spec, mode);
            let b = attacked_strengths(f, &f.codec_only, spec, mode);
            let (ma, mb) = (mean(&a), mean(&b));
            let wins = a.iter().zip(&b).filter(|(x, y)| x >= y).count();
            pass &= ma >= mb;
            parts.push(format!("{} {mode_name}: mean −log10 p {ma:.1} vs {mb:.1} ({wins}/{} images ≥)", spec.label(), a.len()));
        }
    }
    outcome(pass, format!("steps=50 vs steps=0: {}", parts.join("; ")))
}

fn rotation_correction() -> Outcome {
    let f = fixture();
    let threshold = 0.99;
    let registry = AttackRegistry::with_builtins();
    let spec = AttackSpec::new("rotation").with("degrees", 90.0);
    let d = detector(f, 50, DetectionMode::default(), threshold);
    let rotated: Vec<Image> = f
        .full
        .embeds
        .iter()
        .map(|e| registry.apply(&e.watermarked, &spec, &AttackContext::new(0)).unwrap())
        .collect();
    let plain: Vec<DetectionResult> = map_slice(Exec::Parallel, &rotated, |x| d.detect_lenient(x).unwrap());
    let corrected: Vec<DetectionResult> =
        rotated.iter().map(|x| d.detect_with_rotation_correction(x, 30.0).unwrap()).collect();
    let (wp, wc) = (rate(&plain, threshold), rate(&corrected, threshold));
    let angles: Vec<String> = corrected.iter().filter_map(|r| r.rotation_angle).map(|a| format!("{a}")).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    outcome(
        wc >= 0.9 && wp < wc,
        format!("p* = {threshold}: corrected WDR {wc:.2} ≥ 0.9, plain WDR {wp:.2} < corrected; recovered angles {{{}}}", angles.join(", ")),
    )
}

fn enhancement_contract() -> Outcome {
    let f = fixture();
    let s_star = EmbedConfig::default().ssim_threshold;
    let all: Vec<&EmbedResult> = f.full.embeds.iter().chain(&f.codec_only.embeds).collect();
    let meets = all.iter().filter(|e| e.ssim >= s_star - 1e-12).count();
    let worst = all.iter().map(|e| e.ssim).fold(f64::INFINITY, f64::min);
    let minimal = |x0: &Image, e: &EmbedResult, s: f64| e.gamma == 0.0 || ssim(x0, &blend(x0, &e.generated, (e.gamma - 0.01).max(0.0)).unwrap()).unwrap() < s;
    let mut spot_ok = all.iter().zip(f.images.iter().chain(&f.images)).all(|(e, x)| minimal(x, e, s_star));
    // a stricter target forces γ* > 0
    let strict = 0.99;
    let cfg = EmbedConfig { ssim_threshold: strict, ..EmbedConfig::default() };
    let mut nontrivial = 0;
    for x in f.images.iter().take(5) {
        let e = embed(x, &f.key, &f.backend, &cfg).unwrap();
        nontrivial += (e.gamma > 0.0) as usize;
        spot_ok &= e.ssim >= strict - 1e-12 && minimal(x, &e, strict);
    }
    let pass = meets == all.len() && spot_ok && nontrivial > 0;
    outcome(
        pass,
        format!("{meets}/{} embeds reach s* = {s_star} (min SSIM {worst:.4}); γ* minimal on all defaults and 5 spot checks at s* = {strict} ({nontrivial} with γ* > 0): {spot_ok}", all.len()),
    )
}

/// Worst elementwise `|fd − an| / max(|fd|, |an|)`, ignoring entries below
/// `floor` in both.
fn worst_relative(fd: &[f64], an: &[f64], floor: f64) -> f64 {
    fd.iter()
        .zip(an)
        .filter(|(a, b)| a.abs().max(b.abs()) > floor)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()))
        .fold(0.0, f64::max)
}

fn central_difference(n: usize, h: f64, f: impl Fn(usize, f64) -> f64) -> Vec<f64> {
    (0..n).map(|i| (f(i, h) - f(i, -h)) / (2.0 * h)).collect()
}

fn chain_check(predictor: &dyn NoisePredictor, g: Geometry) -> f64 {
    let schedule = NoiseSchedule::new(100, &ScheduleKind::default()).unwrap();
    let ts = schedule.timesteps(10).unwrap();
    let z = random_latent(g, 5);
    let w = random_latent(g, 6);
    let f = |z: &Latent| {
        let out = denoise_over(z, predictor, &schedule, &ts);
        out.dot(&w) + 0.5 * out.sum_sq()
    };
    let trace = DenoiseTrace::run(&z, predictor, &schedule, &ts);
    let mut up = w.clone();
    up.axpy(1.0, &trace.output);
    let an = trace.vjp(predictor, &up);
    let fd = central_difference(g.len(), 1e-5, |i, h| {
        let mut p = z.clone();
        p.as_mut_slice()[i] += h;
        f(&p)
    });
    worst_relative(&fd, an.as_slice(), 1e-8)
}

fn gradient_checks() -> Outcome {
    let g = Geometry::new(3, 8, 8);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let reference = Image::from_fn(g, |_, _, _| rng.random_range(-0.9..0.9));
    let candidate = Image::from_fn(g, |_, _, _| rng.random_range(-0.9..0.9));
    let (_, grad) = reconstruction_loss_with_grad(&reference, &candidate, 0.1, 0.0, None).unwrap();
    let fd = central_difference(g.len(), 1e-6, |i, h| {
        let mut c = candidate.clone();
        c.as_mut_slice()[i] += h;
        reconstruction_loss_with_grad(&reference, &c, 0.1, 0.0, None).unwrap().0.total
    });
    let loss_err = worst_relative(&fd, grad.as_slice(), 1e-8);
    let lg = Geometry::new(4, 8, 8);
    let linear = chain_check(&LinearPredictor { c: 0.1 }, lg);
    let tanh = chain_check(&TanhPredictor { c: 0.3 }, lg);
    let spectral = build_backend(&BackendConfig::default().with_latent_size(8).with_timesteps(100)).unwrap();
    let spec = chain_check(spectral.predictor(), lg);
    let worst = loss_err.max(linear).max(tanh).max(spec);
    outcome(
        worst < 1e-3,
        format!("8×8 relative errors: reconstruction loss {loss_err:.1e}, denoise chain linear {linear:.1e} / tanh {tanh:.1e} / spectral {spec:.1e}; all < 1e-3"),
    )
}

fn composite_order() -> Outcome {
    let f = fixture();
    let registry = AttackRegistry::with_toy_adapters();
    let forward = preset("all-wo-rotation").unwrap();
    let reverse = preset("all-wo-rotation-rev").unwrap();
    let ctx = AttackContext::new(123).with_backend(&f.backend);
    let x = &f.full.embeds[0].watermarked;
    let a = apply_pipeline(x, &forward, &registry, &ctx).unwrap();
    let b = apply_pipeline(x, &reverse, &registry, &ctx).unwrap();
    let diff = a.max_abs_diff(&b);

    let images: Vec<(String, Image)> = f.images.iter().take(4).enumerate().map(|(i, x)| (format!("img{i}"), x.clone())).collect();
    let pristine: Vec<(String, Image)> = f.pristine.iter().take(4).enumerate().map(|(i, x)| (format!("pristine{i}"), x.clone())).collect();
    let fwd_ref = PipelineRef::Named("all-wo-rotation".into());
    let rev_ref = PipelineRef::Named("all-wo-rotation-rev".into());
    let (fl, rl) = (fwd_ref.label(), rev_ref.label());
    let cfg = SweepConfig { attacks: vec![fwd_ref, rev_ref], ..SweepConfig::default() };
    let cache = EmbedCache::in_memory();
    let inputs = SweepInputs {
        backend: &f.backend,
        key: &f.key,
        registry: &registry,
        images: &images,
        pristine: &pristine,
        cache: &cache,
        exec: Exec::Parallel,
    };
    let out = run_sweep(&cfg, &inputs).unwrap();
    let config = out.report.cells[0].config.clone();
    let cf = out.report.cell(&config, &fl, 0.9).map(|c| (c.wdr, c.watermarked));
    let cr = out.report.cell(&config, &rl, 0.9).map(|c| (c.wdr, c.watermarked));
    let table = out.report.wdr_table_csv().unwrap();
    let header = table.lines().next().unwrap_or_default().to_string();
    let both_columns = header.contains(&format!("wdr_{fl}")) && header.contains(&format!("wdr_{rl}"));
    let pass = diff > 1e-3 && out.errors.is_empty() && both_columns && matches!((cf, cr), (Some((_, 4)), Some((_, 4))));
    outcome(
        pass,
        format!(
            "forward vs reversed max pixel difference {diff:.3}; reported separately: {fl} WDR {:.2}, {rl} WDR {:.2} (no ordering asserted); table columns present: {both_columns}",
            cf.and_then(|c| c.0).unwrap_or(f64::NAN),
            cr.and_then(|c| c.0).unwrap_or(f64::NAN)
        ),
    )
}
