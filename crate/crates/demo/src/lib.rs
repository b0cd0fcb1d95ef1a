//! WebAssembly bindings for the static page in `www/`.
//!
//! Images cross the boundary as flat `[C, H, W]` arrays in `[0, 1]`.

// `as f64` on `Real` is a no-op only without the `f32` feature.
#![allow(clippy::unnecessary_cast)]

use std::path::Path;

use gran_core::attacks::fgsm;
use gran_core::gran::{extract_gran_features, gaussian_smooth, gran_feature_names};
use gran_core::nn::{checkpoint, Architecture, Model};
use gran_core::{Real, Tensor};
use wasm_bindgen::prelude::*;

fn js_err(e: gran_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Gaussian smoothing of one image; `shape` is `[C, H, W]`.
#[wasm_bindgen]
pub fn smooth(pixels: &[f64], shape: &[usize], sigma: f64) -> Result<Vec<f64>, JsError> {
    let x = Tensor::new(shape.to_vec(), pixels.iter().map(|&v| v as Real).collect()).map_err(js_err)?;
    Ok(gaussian_smooth(&x, sigma).data().iter().map(|&v| v as f64).collect())
}

#[wasm_bindgen]
pub struct Detector {
    model: Model,
}

#[wasm_bindgen]
impl Detector {
    /// Loads a checkpoint written by `gran train`.
    #[wasm_bindgen(js_name = fromCheckpoint)]
    pub fn from_checkpoint(bytes: &[u8]) -> Result<Detector, JsError> {
        let model = checkpoint::from_bytes(bytes, Path::new("uploaded checkpoint")).map_err(js_err)?;
        Ok(Detector { model })
    }

    /// A randomly initialised built-in architecture, for trying the page
    /// without a checkpoint.
    pub fn untrained(architecture: &str, seed: u64) -> Result<Detector, JsError> {
        let arch = Architecture::builtin(architecture).map_err(js_err)?;
        Ok(Detector { model: Model::new(arch, seed).map_err(js_err)? })
    }

    #[wasm_bindgen(js_name = inputShape)]
    pub fn input_shape(&self) -> Vec<usize> {
        self.model.input_shape().to_vec()
    }

    pub fn checksum(&self) -> String {
        self.model.checksum()
    }

    #[wasm_bindgen(js_name = featureNames)]
    pub fn feature_names(&self) -> Vec<String> {
        gran_feature_names(&self.model)
    }

    fn image(&self, pixels: &[f64]) -> Result<Tensor, JsError> {
        let shape = self.model.input_shape().to_vec();
        Tensor::new(shape, pixels.iter().map(|&v| v as Real).collect()).map_err(js_err)
    }

    /// Class probabilities.
    pub fn predict(&self, pixels: &[f64]) -> Result<Vec<f64>, JsError> {
        Ok(self.model.predict(&self.image(pixels)?).map_err(js_err)?.probs)
    }

    /// Per-parameter-tensor gradient norms at smoothing `sigma`.
    pub fn features(&self, pixels: &[f64], sigma: f64) -> Result<Vec<f64>, JsError> {
        let f = extract_gran_features(&self.model, &self.image(pixels)?, sigma, 0).map_err(js_err)?;
        Ok(f.values)
    }

    /// FGSM against the model's own prediction.
    pub fn attack(&self, pixels: &[f64], epsilon: f64) -> Result<Vec<f64>, JsError> {
        let x = self.image(pixels)?;
        let label = self.model.predict(&x).map_err(js_err)?.class;
        let adv = fgsm(&self.model, &x, label, epsilon).map_err(js_err)?;
        Ok(adv.data().iter().map(|&v| v as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_and_attack_have_the_right_sizes() {
        let d = Detector::untrained("mnist", 3).unwrap_or_else(|_| panic!("builtin"));
        let x = vec![0.5; 28 * 28];
        assert_eq!(d.features(&x, 0.4).unwrap_or_else(|_| panic!()).len(), d.feature_names().len());
        let adv = d.attack(&x, 0.3).unwrap_or_else(|_| panic!());
        assert!(adv.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 0.3 + 1e-12));
        assert_eq!(d.predict(&x).unwrap_or_else(|_| panic!()).len(), 10);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Model::new(Architecture::builtin("synthetic").unwrap(), 1).unwrap();
        let d = Detector::from_checkpoint(&checkpoint::to_bytes(&m)).unwrap_or_else(|_| panic!());
        assert_eq!(d.checksum(), m.checksum());
        assert_eq!(d.input_shape(), vec![1, 1, 2]);
    }

    #[test]
    fn smoothing_keeps_a_constant_image() {
        let out = smooth(&[0.25; 16], &[1, 4, 4], 1.0).unwrap_or_else(|_| panic!());
        assert!(out.iter().all(|v| (v - 0.25).abs() < 1e-12));
    }
}
