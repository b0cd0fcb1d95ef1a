//! Adversarial attacks against a trained [`Model`].
//!
//! All attacks work on `[C, H, W]` images in `[0, 1]`, never modify the
//! model, and are deterministic. Input gradients come from the autodiff tape
//! with the image registered as a differentiable leaf.

mod cw;
mod gradient_sign;
mod jsma;

use serde::{Deserialize, Serialize};

pub use cw::cw_l2;
pub use gradient_sign::{bim, fgsm, BimVariant};
pub use jsma::{jsma, JsmaOutcome};

use crate::nn::Model;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fgsm,
    BimA,
    BimB,
    Jsma,
    Cw,
}

/// Hyperparameters for every attack; only the fields of `kind` are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Max per-pixel perturbation (FGSM, BIM).
    pub epsilon: f64,
    /// BIM step size.
    pub alpha: f64,
    /// BIM iteration cap.
    pub iterations: usize,
    /// JSMA per-pixel change (1.0 saturates).
    pub jsma_theta: f64,
    /// JSMA budget as a fraction of the pixel count.
    pub jsma_gamma: f64,
    /// Modify pixel pairs (true) or single pixels per JSMA iteration.
    pub jsma_pairs: bool,
    pub cw_kappa: f64,
    pub cw_binary_steps: usize,
    pub cw_iterations: usize,
    pub cw_learning_rate: f64,
    pub cw_initial_const: f64,
}

impl AttackConfig {
    /// Defaults: FGSM eps 0.3; BIM alpha = eps/10 with 10 steps; JSMA theta 1,
    /// gamma 14%, pixel pairs; CW kappa 0, 5 binary-search steps, 200
    /// iterations.
    pub fn new(kind: AttackKind) -> Self {
        AttackConfig {
            kind,
            epsilon: 0.3,
            alpha: 0.03,
            iterations: 10,
            jsma_theta: 1.0,
            jsma_gamma: 0.14,
            jsma_pairs: true,
            cw_kappa: 0.0,
            cw_binary_steps: 5,
            cw_iterations: 200,
            cw_learning_rate: 0.1,
            cw_initial_const: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.epsilon, self.alpha, self.jsma_gamma, self.cw_kappa, self.cw_learning_rate];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("attack parameters must be finite and non-negative"));
        }
        if self.iterations == 0 || self.cw_iterations == 0 || self.cw_binary_steps == 0 {
            return Err(Error::invalid("attack iteration caps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub adversarial: Tensor,
    /// `argmax F(adversarial) != label`.
    pub success: bool,
    pub predicted: usize,
}

/// Runs the configured attack on `x` whose correct class is `label`.
///
/// JSMA targets the clean input's second most probable class. A failed CW
/// search returns the clean image with `success == false`.
pub fn run_attack(model: &Model, x: &Tensor, label: usize, config: &AttackConfig) -> Result<AttackOutcome> {
    config.validate()?;
    let adversarial = match config.kind {
        AttackKind::Fgsm => fgsm(model, x, label, config.epsilon)?,
        AttackKind::BimA => bim(model, x, label, config, BimVariant::A)?,
        AttackKind::BimB => bim(model, x, label, config, BimVariant::B)?,
        AttackKind::Jsma => {
            let probs = model.predict(x)?.probs;
            let target = runner_up(&probs, label);
            jsma(model, x, target, config)?.adversarial
        }
        AttackKind::Cw => cw_l2(model, x, label, config)?.unwrap_or_else(|| x.clone()),
    };
    let predicted = model.predict(&adversarial)?.class;
    Ok(AttackOutcome {
        success: predicted != label,
        adversarial,
        predicted,
    })
}

/// Most probable class other than `exclude` (lowest index on ties).
pub(crate) fn runner_up(probs: &[f64], exclude: usize) -> usize {
    let mut best: Option<usize> = None;
    for (i, p) in probs.iter().enumerate() {
        if i != exclude && best.is_none_or(|b| *p > probs[b]) {
            best = Some(i);
        }
    }
    best.expect("at least two classes")
}

#[cfg(test)]
pub(crate) mod test_models {
    use crate::nn::{Architecture, LayerSpec, Model};
    use crate::Real;

    /// `[1, 1, n]` input, one dense layer to `classes` logits with the given
    /// `[n, classes]` weights and zero bias.
    pub fn linear(n: usize, classes: usize, weights: &[Real]) -> Model {
        let arch = Architecture {
            name: "linear".into(),
            input: [1, 1, n],
            classes,
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: classes }, LayerSpec::Softmax],
        };
        let mut m = Model::zeros(arch).unwrap();
        m.params_mut()[0].value.data_mut().copy_from_slice(weights);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runner_up_skips_excluded_class() {
        assert_eq!(runner_up(&[0.7, 0.2, 0.1], 0), 1);
        assert_eq!(runner_up(&[0.1, 0.2, 0.7], 2), 1);
        assert_eq!(runner_up(&[0.5, 0.25, 0.25], 0), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = AttackConfig::new(AttackKind::BimA);
        c.iterations = 0;
        assert!(c.validate().is_err());
        let mut c = AttackConfig::new(AttackKind::Fgsm);
        c.epsilon = -0.1;
        assert!(c.validate().is_err());
    }
}
