//! Two-Gaussian toy data on `[1, 1, 2]` "images".
//!
//! Class 0 is centred at (0.3, 0.3) and class 1 at (0.7, 0.7), standard
//! deviation 0.06, truncated at 2.5 standard deviations. The classes are
//! linearly separable by `x0 + x1 = 1` with a margin of at least 0.13.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, LabeledImage};
use crate::{Real, Tensor};

const CENTRES: [[f64; 2]; 2] = [[0.3, 0.3], [0.7, 0.7]];
const SPREAD: f64 = 0.06;
const TRUNCATE: f64 = 2.5;

fn point(rng: &mut ChaCha8Rng, class: usize) -> [f64; 2] {
    loop {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        if a * a + b * b <= TRUNCATE * TRUNCATE {
            let c = CENTRES[class];
            return [c[0] + SPREAD * a, c[1] + SPREAD * b];
        }
    }
}

fn image(p: [f64; 2], label: usize, id: u64) -> LabeledImage {
    LabeledImage {
        pixels: Tensor::new(vec![1, 1, 2], vec![p[0] as Real, p[1] as Real]).expect("2 values"),
        label,
        id,
    }
}

/// `per_class` samples of each class, alternating labels.
pub fn two_gaussians(per_class: usize, seed: u64, first_id: u64) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2 * per_class)
        .map(|i| {
            let class = i % 2;
            image(point(&mut rng, class), class, first_id + i as u64)
        })
        .collect()
}

/// Points just across the class boundary (distance 0.02 to 0.085), labelled
/// with the class of the far side. A classifier trained on
/// [`two_gaussians`] gets every one of them wrong, with low confidence.
pub fn boundary_band(count: usize, seed: u64, first_id: u64) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt2 = std::f64::consts::SQRT_2;
    (0..count)
        .map(|i| {
            let true_class = i % 2;
            let along: f64 = rng.random_range(0.3..0.7);
            let dist: f64 = rng.random_range(0.02..0.085);
            // class 0 lives below the line, so its mislabelled points sit above it
            let sign = if true_class == 0 { 1.0 } else { -1.0 };
            let p = [along + sign * dist / sqrt2, 1.0 - along + sign * dist / sqrt2];
            image(p, true_class, first_id + i as u64)
        })
        .collect()
}

/// Training split of clean clusters; the test split mixes clean clusters with
/// a boundary band so that the classifier makes errors.
pub fn dataset(seed: u64) -> Dataset {
    let train = two_gaussians(400, seed, 0);
    let mut test = two_gaussians(300, seed ^ 0x7e57, 800);
    test.extend(boundary_band(60, seed ^ 0xba2d, 1400));
    Dataset {
        name: "synthetic".into(),
        train,
        test,
        classes: 2,
    }
}
