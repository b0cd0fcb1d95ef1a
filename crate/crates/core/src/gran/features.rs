use crate::autodiff::ParamId;
use crate::nn::Model;
use crate::{Result, Tensor};

use super::smooth::gaussian_smooth;

/// Per-parameter-tensor L1 norms of the loss gradient, in model parameter
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct GranFeatures {
    pub values: Vec<f64>,
    pub sample_id: u64,
    pub sigma: f64,
}

impl GranFeatures {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Feature names, one per parameter tensor.
pub fn gran_feature_names(model: &Model) -> Vec<String> {
    model.param_names().into_iter().map(str::to_string).collect()
}

fn norms_at(model: &Model, smoothed: &Tensor, predicted: usize) -> Result<Vec<f64>> {
    let (_, grads) = model.loss_and_gradients(smoothed, &[predicted])?;
    Ok((0..model.params().len())
        .map(|i| grads.param(ParamId(i)).map_or(0.0, Tensor::l1_norm))
        .collect())
}

/// Predicts `y = argmax F(x)` on the clean image, smooths it with standard
/// deviation `sigma`, and returns `|| d L(F(x~), y) / d theta_i ||_1` for
/// every parameter tensor. Costs one forward pass on `x` and one forward and
/// backward pass on the smoothed image.
pub fn extract_gran_features(model: &Model, x: &Tensor, sigma: f64, sample_id: u64) -> Result<GranFeatures> {
    let predicted = model.predict(x)?.class;
    let values = norms_at(model, &gaussian_smooth(x, sigma), predicted)?;
    Ok(GranFeatures { values, sample_id, sigma })
}

/// Same as calling [`extract_gran_features`] on each image, with the clean
/// predictions computed as one batch.
pub fn extract_gran_batch(model: &Model, xs: &[(u64, &Tensor)], sigma: f64) -> Result<Vec<GranFeatures>> {
    let images: Vec<&Tensor> = xs.iter().map(|(_, x)| *x).collect();
    let preds = model.predict_batch(&images)?;
    xs.iter()
        .zip(preds)
        .map(|((id, x), p)| {
            Ok(GranFeatures {
                values: norms_at(model, &gaussian_smooth(x, sigma), p.class)?,
                sample_id: *id,
                sigma,
            })
        })
        .collect()
}
