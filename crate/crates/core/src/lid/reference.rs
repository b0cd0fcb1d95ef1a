use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::estimator::lid_estimate;
use crate::artifact::{self, Stamp};
use crate::data::{correctly_classified, LabeledImage};
use crate::nn::{Layer, Model};
use crate::{Error, Result, Tensor};

/// Number of stored reference images.
pub const REFERENCE_COUNT: usize = 100;

/// Reference images drawn from the correctly classified training images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidReference {
    pub stamp: Stamp,
    pub k: usize,
    pub ids: Vec<u64>,
    pub images: Vec<Tensor>,
}

impl LidReference {
    /// Draws [`REFERENCE_COUNT`] correctly classified images with a seeded
    /// sample. Needs `k < REFERENCE_COUNT`.
    pub fn build(model: &Model, pretrain: &[LabeledImage], k: usize, seed: u64, fingerprint: &str) -> Result<Self> {
        if k == 0 || k >= REFERENCE_COUNT {
            return Err(Error::invalid(format!("LID k must be in 1..{REFERENCE_COUNT}, got {k}")));
        }
        let correct = correctly_classified(model, pretrain)?;
        if correct.len() < REFERENCE_COUNT {
            return Err(Error::invalid(format!(
                "LID references need {REFERENCE_COUNT} correctly classified training images, found {}",
                correct.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, correct.len(), REFERENCE_COUNT).into_vec();
        picked.sort_unstable();
        Ok(LidReference {
            stamp: Stamp { fingerprint: fingerprint.to_string(), model_checksum: model.checksum() },
            k,
            ids: picked.iter().map(|&i| correct[i].id).collect(),
            images: picked.iter().map(|&i| correct[i].pixels.clone()).collect(),
        })
    }

    /// Values kept in storage: every pixel of every reference image.
    pub fn stored_values(&self) -> usize {
        self.images.iter().map(Tensor::numel).sum()
    }

    /// Reference activations as `[layer][reference][unit]`.
    pub fn activations(&self, model: &Model) -> Result<Vec<Vec<Vec<f64>>>> {
        let refs: Vec<&Tensor> = self.images.iter().collect();
        let batch = Tensor::stack(&refs)?;
        let n = self.images.len();
        Ok(model
            .activations(&batch)?
            .into_iter()
            .map(|layer| layer.chunks(layer.len() / n).map(<[f64]>::to_vec).collect())
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        artifact::write_json(path, self)
    }

    /// Loads a reference file and checks it was built from `model_checksum`.
    pub fn load(path: &Path, model_checksum: &str) -> Result<Self> {
        let r: LidReference = artifact::read_json(path)?;
        r.stamp.expect_model("LID reference", model_checksum)?;
        Ok(r)
    }
}

/// One name per recorded activation layer (`conv1`, `dense2`, ...).
pub fn lid_feature_names(model: &Model) -> Vec<String> {
    let (mut convs, mut denses) = (0, 0);
    model
        .layers()
        .iter()
        .filter_map(|l| match l {
            Layer::Conv2d { .. } => {
                convs += 1;
                Some(format!("conv{convs}"))
            }
            Layer::Dense { .. } => {
                denses += 1;
                Some(format!("dense{denses}"))
            }
            _ => None,
        })
        .collect()
}

fn features_against(model: &Model, x: &Tensor, refs: &[Vec<Vec<f64>>], k: usize) -> Result<Vec<f64>> {
    model
        .activations(x)?
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(layer, (q, r))| lid_estimate(q, r, k, layer))
        .collect()
}

/// Per-layer LID estimates of `x`, recomputing the reference activations.
pub fn extract_lid_features(model: &Model, x: &Tensor, reference: &LidReference) -> Result<Vec<f64>> {
    features_against(model, x, &reference.activations(model)?, reference.k)
}

/// Extracts LID features with the reference activations computed once.
/// Produces the same values as [`extract_lid_features`].
pub struct LidExtractor<'a> {
    model: &'a Model,
    k: usize,
    activations: Vec<Vec<Vec<f64>>>,
}

impl<'a> LidExtractor<'a> {
    pub fn new(model: &'a Model, reference: &LidReference) -> Result<Self> {
        Ok(LidExtractor { model, k: reference.k, activations: reference.activations(model)? })
    }

    pub fn extract(&self, x: &Tensor) -> Result<Vec<f64>> {
        features_against(self.model, x, &self.activations, self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;
    use crate::Real;

    /// Distinct points, half of them labelled with the model's prediction.
    fn images(n: usize) -> Vec<LabeledImage> {
        let m = model();
        (0..n)
            .map(|i| {
                let pixels = Tensor::new(vec![1, 1, 2], vec![i as Real / n as Real, ((i * 7) % n) as Real / n as Real]).unwrap();
                let predicted = m.predict(&pixels).unwrap().class;
                let label = if i % 2 == 0 { predicted } else { 1 - predicted };
                LabeledImage { pixels, label, id: i as u64 }
            })
            .collect()
    }

    fn model() -> Model {
        Model::new(Architecture::builtin("synthetic").unwrap(), 3).unwrap()
    }

    #[test]
    fn reference_holds_100_correct_images() {
        let m = model();
        let pool = images(400);
        let r = LidReference::build(&m, &pool, 20, 1, "fp").unwrap();
        assert_eq!(r.images.len(), REFERENCE_COUNT);
        assert_eq!(r.stored_values(), 200);
        let correct = correctly_classified(&m, &pool).unwrap();
        assert!(r.ids.iter().all(|id| correct.iter().any(|c| c.id == *id)));
        assert_eq!(r, LidReference::build(&m, &pool, 20, 1, "fp").unwrap());
        assert!(LidReference::build(&m, &pool, 100, 1, "fp").is_err());
    }

    #[test]
    fn cached_and_recomputed_features_agree() {
        let m = model();
        let pool = images(400);
        let r = LidReference::build(&m, &pool, 20, 1, "fp").unwrap();
        let x = Tensor::new(vec![1, 1, 2], vec![0.33, 0.77]).unwrap();
        let a = extract_lid_features(&m, &x, &r).unwrap();
        assert_eq!(a, LidExtractor::new(&m, &r).unwrap().extract(&x).unwrap());
        assert_eq!(a.len(), m.activation_layer_count());
        assert_eq!(lid_feature_names(&m), ["dense1", "dense2", "dense3"]);
        assert!(a.iter().all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn reference_file_is_bound_to_its_model() {
        let dir = tempfile::tempdir().unwrap();
        let m = model();
        let r = LidReference::build(&m, &images(300), 10, 2, "fp").unwrap();
        let p = dir.path().join("lid.json");
        r.save(&p).unwrap();
        assert_eq!(LidReference::load(&p, &m.checksum()).unwrap(), r);
        assert!(matches!(LidReference::load(&p, "other"), Err(Error::ChecksumMismatch { .. })));
    }
}
