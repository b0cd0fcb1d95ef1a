use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::data::LabeledImage;
use crate::{Error, Real, Result, Tensor};

/// Plain SGD with momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 32,
            lr_decay: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Trains `model` in place. Deterministic for a given seed.
pub fn train(
    model: &mut Model,
    train_set: &[LabeledImage],
    test_set: Option<&[LabeledImage]>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity: Vec<Vec<Real>> = model.params().iter().map(|p| vec![0.0; p.value.numel()]).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut lr = config.learning_rate as Real;
    let momentum = config.momentum as Real;
    let mut step = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let images: Vec<&Tensor> = batch.iter().map(|&i| &train_set[i].pixels).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set[i].label).collect();
            let x = Tensor::stack(&images)?;
            let (loss, grads) = match model.loss_and_gradients(&x, &labels) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return Err(Error::Divergence { step, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::Divergence { step, loss });
            }
            for (id, g) in grads.params() {
                let v = &mut velocity[id.0];
                let p = model.params_mut()[id.0].value.data_mut();
                for ((pv, vv), gv) in p.iter_mut().zip(v.iter_mut()).zip(g.data()) {
                    *vv = momentum * *vv + gv;
                    *pv -= lr * *vv;
                }
            }
            total += loss * batch.len() as f64;
            step += 1;
        }
        let mean = total / train_set.len() as f64;
        info!("epoch {} loss {:.5} lr {:.5}", epoch + 1, mean, lr);
        epoch_losses.push(mean);
        lr *= config.lr_decay as Real;
    }

    let train_accuracy = accuracy(model, train_set)?;
    let test_accuracy = test_set.map(|t| accuracy(model, t)).transpose()?;
    Ok(TrainReport {
        epoch_losses,
        steps: step,
        train_accuracy,
        test_accuracy,
    })
}

/// Fraction of images whose arg-max prediction equals the label.
pub fn accuracy(model: &Model, images: &[LabeledImage]) -> Result<f64> {
    if images.is_empty() {
        return Ok(0.0);
    }
    let xs: Vec<&Tensor> = images.iter().map(|i| &i.pixels).collect();
    let preds = model.predict_batch(&xs)?;
    let correct = preds.iter().zip(images).filter(|(p, i)| p.class == i.label).count();
    Ok(correct as f64 / images.len() as f64)
}
