use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::images::LabeledImage;
use super::setup::{Cause, DetectionSetup, SetupMeta};
use crate::attacks::{run_attack, AttackConfig};
use crate::fingerprint::derive_seed;
use crate::nn::Model;
use crate::{Error, Real, Result, Tensor};

/// Shared knobs for set-up construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupOptions {
    /// Seed for balancing and noise.
    pub seed: u64,
    /// Cap on the number of pre-test images considered (in file order).
    pub max_images: Option<usize>,
}

impl SetupOptions {
    pub fn new(seed: u64) -> Self {
        SetupOptions { seed, max_images: None }
    }

    fn cap<'a, T>(&self, items: &'a [T]) -> &'a [T] {
        &items[..self.max_images.map_or(items.len(), |m| m.min(items.len()))]
    }
}

fn meta(model: &Model, opts: &SetupOptions) -> SetupMeta {
    SetupMeta {
        seed: opts.seed,
        model_checksum: model.checksum(),
        sigma_star: None,
        noise_rate: None,
        noise_clipped: None,
        attack: None,
        attempted: 0,
        positives: 0,
        negatives: 0,
    }
}

fn predictions(model: &Model, images: &[&LabeledImage]) -> Result<Vec<usize>> {
    let xs: Vec<&Tensor> = images.iter().map(|i| &i.pixels).collect();
    Ok(model.predict_batch(&xs)?.into_iter().map(|p| p.class).collect())
}

/// The images the model classifies correctly, in input order.
pub fn correctly_classified<'a>(model: &Model, images: &'a [LabeledImage]) -> Result<Vec<&'a LabeledImage>> {
    let all: Vec<&LabeledImage> = images.iter().collect();
    let preds = predictions(model, &all)?;
    Ok(all.into_iter().zip(preds).filter(|(img, p)| img.label == *p).map(|(img, _)| img).collect())
}

/// Attacks correctly classified pre-test images. Successful adversarials
/// (prediction differs from the true class) are label 1; the clean originals
/// are label 0.
///
/// `max_images` caps the number of correctly classified images attacked.
pub fn build_adversarial_setup(
    model: &Model,
    pretest: &[LabeledImage],
    attack: &AttackConfig,
    opts: &SetupOptions,
) -> Result<DetectionSetup> {
    let cause = Cause::ALL
        .into_iter()
        .find(|c| c.attack() == Some(attack.kind))
        .expect("every attack kind has a cause");
    let correct = correctly_classified(model, pretest)?;
    let pool = opts.cap(&correct);
    let mut positives = Vec::new();
    let mut negatives = Vec::with_capacity(pool.len());
    for (i, img) in pool.iter().enumerate() {
        let outcome = run_attack(model, &img.pixels, img.label, attack)?;
        if outcome.success {
            positives.push((img.id, outcome.adversarial));
        }
        negatives.push((img.id, img.pixels.clone()));
        if (i + 1) % 50 == 0 {
            debug!("{cause}: {} / {} attacked, {} successful", i + 1, pool.len(), positives.len());
        }
    }
    info!("{cause}: {} of {} attacks succeeded", positives.len(), pool.len());
    let mut m = meta(model, opts);
    m.attack = Some(attack.clone());
    m.attempted = pool.len();
    m.positives = positives.len();
    m.negatives = negatives.len();
    DetectionSetup::balanced(cause, positives, negatives, m)
}

/// Clean pre-test images labelled by whether the model misclassifies them.
pub fn build_wrong_setup(model: &Model, pretest: &[LabeledImage], opts: &SetupOptions) -> Result<DetectionSetup> {
    let pool: Vec<&LabeledImage> = opts.cap(pretest).iter().collect();
    let preds = predictions(model, &pool)?;
    let (mut positives, mut negatives) = (Vec::new(), Vec::new());
    for (img, p) in pool.iter().zip(preds) {
        let side = if p == img.label { &mut negatives } else { &mut positives };
        side.push((img.id, img.pixels.clone()));
    }
    let mut m = meta(model, opts);
    m.attempted = pool.len();
    m.positives = positives.len();
    m.negatives = negatives.len();
    DetectionSetup::balanced(Cause::Wrong, positives, negatives, m)
}

/// `clip(x + sigma * n, 0, 1)` where the standard normal draws `n` depend
/// only on `seed` and the image id, so changing `sigma` rescales the same
/// noise pattern.
pub fn noisy_image(image: &LabeledImage, sigma: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("noise/{}", image.id)));
    let mut out = image.pixels.clone();
    for v in out.data_mut() {
        let n: f64 = StandardNormal.sample(&mut rng);
        *v = (*v + (sigma * n) as Real).clamp(0.0, 1.0);
    }
    out
}

/// Result of the noise-level bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCalibration {
    pub sigma: f64,
    /// Misclassification rate of the noisy pool at `sigma`.
    pub rate: f64,
    /// `(sigma, rate)` for every evaluated noise level, in order.
    pub probes: Vec<(f64, f64)>,
}

pub const TARGET_RATE: f64 = 0.5;
pub const RATE_TOLERANCE: f64 = 0.02;
pub const MAX_SIGMA: f64 = 2.0;
pub const MAX_BISECTIONS: usize = 30;

fn noisy_predictions(model: &Model, pool: &[&LabeledImage], sigma: f64, seed: u64) -> Result<Vec<(Tensor, bool)>> {
    let noisy: Vec<Tensor> = pool.iter().map(|img| noisy_image(img, sigma, seed)).collect();
    let refs: Vec<&Tensor> = noisy.iter().collect();
    let preds = model.predict_batch(&refs)?;
    Ok(noisy
        .into_iter()
        .zip(pool)
        .zip(preds)
        .map(|((x, img), p)| (x, p.class != img.label))
        .collect())
}

fn rate(outcomes: &[(Tensor, bool)]) -> f64 {
    outcomes.iter().filter(|(_, wrong)| *wrong).count() as f64 / outcomes.len() as f64
}

/// Bisects on `sigma` in `[0, 2]` until the misclassification rate of the
/// noisy pool is within 2% of one half, for at most 30 steps.
pub fn calibrate_noise(model: &Model, pool: &[&LabeledImage], seed: u64) -> Result<NoiseCalibration> {
    if pool.is_empty() {
        return Err(Error::EmptySetup("noisy: empty image pool".into()));
    }
    let mut probes = Vec::new();
    let mut probe = |sigma: f64| -> Result<f64> {
        let r = rate(&noisy_predictions(model, pool, sigma, seed)?);
        debug!("noise sigma {sigma:.5}: misclassification rate {r:.4}");
        probes.push((sigma, r));
        Ok(r)
    };
    let low_rate = probe(0.0)?;
    let high_rate = probe(MAX_SIGMA)?;
    let within = |r: f64| (r - TARGET_RATE).abs() <= RATE_TOLERANCE;
    let bracket_error = Error::Calibration {
        min_rate: low_rate.min(high_rate),
        max_rate: low_rate.max(high_rate),
        max_sigma: MAX_SIGMA,
    };
    if within(low_rate) {
        return Ok(NoiseCalibration { sigma: 0.0, rate: low_rate, probes });
    }
    if low_rate > TARGET_RATE || high_rate < TARGET_RATE - RATE_TOLERANCE {
        return Err(bracket_error);
    }
    let (mut lo, mut hi) = (0.0, MAX_SIGMA);
    let mut best = (MAX_SIGMA, high_rate);
    for _ in 0..MAX_BISECTIONS {
        if within(best.1) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let r = probe(mid)?;
        if (r - TARGET_RATE).abs() < (best.1 - TARGET_RATE).abs() {
            best = (mid, r);
        }
        if r < TARGET_RATE {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !within(best.1) {
        return Err(bracket_error);
    }
    Ok(NoiseCalibration { sigma: best.0, rate: best.1, probes })
}

/// Gaussian-noised copies of the correctly classified pre-test images at the
/// calibrated noise level, labelled by whether the model misclassifies them.
pub fn build_noisy_setup(model: &Model, pretest: &[LabeledImage], opts: &SetupOptions) -> Result<DetectionSetup> {
    let correct = correctly_classified(model, pretest)?;
    let pool = opts.cap(&correct);
    let calibration = calibrate_noise(model, pool, opts.seed)?;
    info!(
        "noisy: sigma* = {:.5}, misclassification rate {:.4} after {} probes",
        calibration.sigma,
        calibration.rate,
        calibration.probes.len()
    );
    let (mut positives, mut negatives) = (Vec::new(), Vec::new());
    for ((x, wrong), img) in noisy_predictions(model, pool, calibration.sigma, opts.seed)?.into_iter().zip(pool) {
        let side = if wrong { &mut positives } else { &mut negatives };
        side.push((img.id, x));
    }
    let mut m = meta(model, opts);
    m.sigma_star = Some(calibration.sigma);
    m.noise_rate = Some(calibration.rate);
    m.noise_clipped = Some(true);
    m.attempted = pool.len();
    m.positives = positives.len();
    m.negatives = negatives.len();
    DetectionSetup::balanced(Cause::Noisy, positives, negatives, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackKind;
    use crate::nn::{Architecture, LayerSpec};

    /// Two pixels, logits (x0, x1): class = brighter pixel, ties to class 0.
    fn brighter_pixel() -> Model {
        let arch = Architecture {
            name: "brighter".into(),
            input: [1, 1, 2],
            classes: 2,
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
        };
        let mut m = Model::zeros(arch).unwrap();
        m.params_mut()[0].value.data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        m
    }

    fn img(id: u64, a: Real, b: Real, label: usize) -> LabeledImage {
        LabeledImage { pixels: Tensor::new(vec![1, 1, 2], vec![a, b]).unwrap(), label, id }
    }

    #[test]
    fn perfect_model_has_no_wrong_setup() {
        let m = brighter_pixel();
        let images: Vec<_> = (0..10).map(|i| img(i, 0.9, 0.1, 0)).collect();
        assert!(matches!(build_wrong_setup(&m, &images, &SetupOptions::new(1)), Err(Error::EmptySetup(_))));
    }

    #[test]
    fn wrong_setup_is_bounded_by_twice_the_errors() {
        let m = brighter_pixel();
        let mut images: Vec<_> = (0..40).map(|i| img(i, 0.9, 0.1, 0)).collect();
        images.extend((40..50).map(|i| img(i, 0.9, 0.1, 1)));
        let s = build_wrong_setup(&m, &images, &SetupOptions::new(3)).unwrap();
        assert_eq!(s.samples.len(), 20);
        assert_eq!(s.meta.positives, 10);
        assert!(s.samples.iter().filter(|x| x.label == 1).all(|x| x.source_id >= 40));
    }

    #[test]
    fn attack_succeeding_everywhere_is_balanced() {
        let m = brighter_pixel();
        let images: Vec<_> = (0..20).map(|i| img(i, 0.6, 0.4, 0)).collect();
        let cfg = AttackConfig::new(AttackKind::Fgsm);
        let s = build_adversarial_setup(&m, &images, &cfg, &SetupOptions::new(0)).unwrap();
        assert_eq!(s.meta.positives, 20);
        assert_eq!(s.samples.len(), 40);
        for x in s.samples.iter().filter(|x| x.label == 1) {
            assert_eq!(m.predict(&x.pixels).unwrap().class, 1);
        }
    }

    #[test]
    fn attack_succeeding_nowhere_is_an_error() {
        let m = brighter_pixel();
        let images: Vec<_> = (0..20).map(|i| img(i, 1.0, 0.0, 0)).collect();
        let mut cfg = AttackConfig::new(AttackKind::Fgsm);
        cfg.epsilon = 0.1;
        assert!(matches!(
            build_adversarial_setup(&m, &images, &cfg, &SetupOptions::new(0)),
            Err(Error::EmptySetup(_))
        ));
    }

    #[test]
    fn noise_is_seeded_per_image_and_clipped() {
        let a = img(5, 0.5, 0.5, 0);
        assert_eq!(noisy_image(&a, 0.3, 1), noisy_image(&a, 0.3, 1));
        assert_ne!(noisy_image(&a, 0.3, 1), noisy_image(&img(6, 0.5, 0.5, 0), 0.3, 1));
        assert_eq!(noisy_image(&a, 0.0, 1), a.pixels);
        assert!(noisy_image(&a, 50.0, 1).data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn calibration_hits_half_and_reports_unreachable_targets() {
        // a small bias towards class 1 lets heavy noise flip more than half
        let mut m = brighter_pixel();
        m.params_mut()[1].value.data_mut()[1] = 0.05;
        let images: Vec<_> = (0..400).map(|i| img(i, 0.55, 0.45, 0)).collect();
        let pool: Vec<&LabeledImage> = images.iter().collect();
        let c = calibrate_noise(&m, &pool, 9).unwrap();
        assert!((c.rate - 0.5).abs() <= 0.02, "{c:?}");
        assert_eq!(c.probes[0], (0.0, 0.0));
        assert!(c.probes[1].1 >= c.probes[0].1);
        assert!(c.probes.len() <= 2 + MAX_BISECTIONS);

        // a constant classifier never flips, whatever the noise
        let mut constant = brighter_pixel();
        constant.params_mut()[0].value.data_mut().fill(0.0);
        constant.params_mut()[1].value.data_mut()[0] = 1.0;
        match calibrate_noise(&constant, &pool, 9) {
            Err(Error::Calibration { max_rate, max_sigma, .. }) => {
                assert_eq!(max_rate, 0.0);
                assert_eq!(max_sigma, 2.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
