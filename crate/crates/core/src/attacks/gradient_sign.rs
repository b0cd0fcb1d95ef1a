use super::AttackConfig;
use crate::nn::Model;
use crate::{Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BimVariant {
    /// Stop at the first iterate that is misclassified.
    A,
    /// Always run the full iteration cap.
    B,
}

fn loss_gradient(model: &Model, x: &Tensor, label: usize) -> Result<Tensor> {
    let (_, g) = model.input_gradient(x, |tape, z| tape.softmax_cross_entropy(z, &[label]))?;
    Ok(g)
}

fn sign(v: Real) -> Real {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `clip(x + eps * sign(grad_x L(x, label)), 0, 1)`.
pub fn fgsm(model: &Model, x: &Tensor, label: usize, epsilon: f64) -> Result<Tensor> {
    let g = loss_gradient(model, x, label)?;
    let eps = epsilon as Real;
    let data = x
        .data()
        .iter()
        .zip(g.data())
        .map(|(&v, &d)| (v + eps * sign(d)).clamp(0.0, 1.0))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Iterated FGSM steps of size `alpha`, projected onto the `epsilon` box
/// around `x` and onto `[0, 1]` after every step.
pub fn bim(model: &Model, x: &Tensor, label: usize, config: &AttackConfig, variant: BimVariant) -> Result<Tensor> {
    let (eps, alpha) = (config.epsilon as Real, config.alpha as Real);
    let mut adv = x.clone();
    for _ in 0..config.iterations {
        if variant == BimVariant::A && model.predict(&adv)?.class != label {
            break;
        }
        let g = loss_gradient(model, &adv, label)?;
        for ((a, &orig), &d) in adv.data_mut().iter_mut().zip(x.data()).zip(g.data()) {
            let stepped = *a + alpha * sign(d);
            *a = stepped.clamp(orig - eps, orig + eps).clamp(0.0, 1.0);
        }
    }
    Ok(adv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{test_models::linear, AttackKind};
    use crate::nn::{Architecture, Model};
    use proptest::prelude::*;

    fn image(values: &[Real]) -> Tensor {
        Tensor::new(vec![1, 1, values.len()], values.to_vec()).unwrap()
    }

    /// p(class 1) = sigmoid(w x) realised as logits (0, w x).
    fn logistic(w: Real) -> Model {
        linear(1, 2, &[0.0, w])
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let m = logistic(2.0);
        let x = image(&[0.4]);
        assert_eq!(fgsm(&m, &x, 1, 0.0).unwrap(), x);
    }

    #[test]
    fn logistic_model_steps_against_the_weight() {
        // dL/dx = -(1 - p) w < 0 for y = 1, w > 0, so x moves down by eps.
        let m = logistic(3.0);
        for (x0, eps, expected) in [(0.5, 0.1, 0.4), (0.05, 0.2, 0.0), (0.9, 0.3, 0.6)] {
            let adv = fgsm(&m, &image(&[x0]), 1, eps).unwrap();
            assert!((adv.data()[0] - expected).abs() < 1e-12, "{x0} {eps}");
        }
    }

    #[test]
    fn positive_gradient_at_all_ones_is_clipped() {
        // label 0 with w > 0: dL/dx = p1 * w > 0 everywhere.
        let m = linear(3, 2, &[0.0, 1.0, 0.0, 2.0, 0.0, 0.5]);
        let x = image(&[1.0, 1.0, 1.0]);
        assert_eq!(fgsm(&m, &x, 0, 0.3).unwrap(), x);
    }

    #[test]
    fn single_bim_step_with_alpha_epsilon_equals_fgsm() {
        let m = Model::new(Architecture::builtin("mnist").unwrap(), 4).unwrap();
        let x = Tensor::new(vec![1, 28, 28], (0..784).map(|i| ((i * 37) % 100) as Real / 100.0).collect()).unwrap();
        let mut cfg = AttackConfig::new(AttackKind::BimB);
        cfg.iterations = 1;
        cfg.alpha = cfg.epsilon;
        let label = m.predict(&x).unwrap().class;
        assert_eq!(bim(&m, &x, label, &cfg, BimVariant::B).unwrap(), fgsm(&m, &x, label, cfg.epsilon).unwrap());
    }

    #[test]
    fn bim_a_returns_misclassified_input_untouched() {
        let m = logistic(3.0);
        let x = image(&[0.8]);
        // class 1 is predicted; claim the label is 0
        let cfg = AttackConfig::new(AttackKind::BimA);
        assert_eq!(bim(&m, &x, 0, &cfg, BimVariant::A).unwrap(), x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bim_stays_in_epsilon_box_and_unit_range(
            xs in proptest::collection::vec(0.0..=1.0f64, 4),
            w in proptest::collection::vec(-3.0..3.0f64, 8),
            eps in 0.0..0.5f64, alpha in 0.0..0.3f64, iters in 1usize..15, b in any::<bool>()
        ) {
            let w: Vec<Real> = w.into_iter().map(|v| v as Real).collect();
            let m = linear(4, 2, &w);
            let x = image(&xs.iter().map(|&v| v as Real).collect::<Vec<_>>());
            let mut cfg = AttackConfig::new(AttackKind::BimB);
            cfg.epsilon = eps;
            cfg.alpha = alpha;
            cfg.iterations = iters;
            let variant = if b { BimVariant::B } else { BimVariant::A };
            let adv = bim(&m, &x, 0, &cfg, variant).unwrap();
            for (a, o) in adv.data().iter().zip(x.data()) {
                prop_assert!((a - o).abs() as f64 <= eps + 1e-12);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }
    }
}
