use super::AttackConfig;
use crate::autodiff::Tape;
use crate::nn::Model;
use crate::{Real, Result, Tensor};

const BOX_MARGIN: Real = 1e-6;
const ADAM_B1: Real = 0.9;
const ADAM_B2: Real = 0.999;
const ADAM_EPS: Real = 1e-8;

/// Untargeted Carlini-Wagner L2 attack.
///
/// Optimises `w` with `x' = (tanh(w) + 1) / 2`, minimising
/// `||x' - x||^2 + c * max(Z_y - max_{j != y} Z_j, -kappa)` with Adam, and
/// binary-searches `c`. Returns the successful adversarial with the smallest
/// L2 distance, or `None` if no constant succeeded.
pub fn cw_l2(model: &Model, x: &Tensor, label: usize, config: &AttackConfig) -> Result<Option<Tensor>> {
    let [c, h, w] = model.input_shape();
    let batched = x.clone().reshape(&[1, c, h, w])?;
    let w0 = batched.map(|v| {
        let squeezed = v.clamp(0.0, 1.0) * (1.0 - 2.0 * BOX_MARGIN) + BOX_MARGIN;
        (2.0 * squeezed - 1.0).atanh()
    });
    let half = Tensor::full(&[1, c, h, w], 0.5);
    let kappa = config.cw_kappa as Real;
    let lr = config.cw_learning_rate as Real;

    let (mut lower, mut upper) = (0.0f64, f64::INFINITY);
    let mut constant = config.cw_initial_const;
    let mut best: Option<(Real, Tensor)> = None;
    let check_every = (config.cw_iterations / 10).max(1);

    for _ in 0..config.cw_binary_steps {
        let mut wv = w0.clone();
        let mut m = vec![0.0 as Real; wv.numel()];
        let mut v = vec![0.0 as Real; wv.numel()];
        let mut previous = Real::INFINITY;
        let mut succeeded = false;

        for it in 0..config.cw_iterations {
            let mut tape = Tape::new();
            let wvar = tape.variable(wv.clone());
            let t = tape.tanh(wvar)?;
            let t = tape.scale(t, 0.5)?;
            let offset = tape.constant(half.clone());
            let xa = tape.add(t, offset)?;
            let orig = tape.constant(batched.clone());
            let diff = tape.sub(xa, orig)?;
            let sq = tape.mul(diff, diff)?;
            let dist = tape.sum(sq)?;
            let z = model.forward_on(&mut tape, xa, None)?;

            let logits = tape.value(z).data().to_vec();
            let rival = super::runner_up(&logits.iter().map(|&l| l as f64).collect::<Vec<_>>(), label);
            let mut margin_w = vec![0.0 as Real; logits.len()];
            margin_w[label] = 1.0;
            margin_w[rival] = -1.0;
            let margin = tape.weighted_sum(z, &margin_w)?;
            let kappa_c = tape.constant(Tensor::scalar(kappa));
            let shifted = tape.add(margin, kappa_c)?;
            let hinge = tape.relu(shifted)?;
            let hinge = tape.scale(hinge, constant as Real)?;
            let loss = tape.add(dist, hinge)?;

            let l2 = tape.value(dist).data()[0];
            let margin_value = logits[label] - logits[rival];
            if margin_value < -kappa || (kappa == 0.0 && crate::tensor::argmax(&logits) != label) {
                succeeded = true;
                if best.as_ref().is_none_or(|(b, _)| l2 < *b) {
                    best = Some((l2, tape.value(xa).clone()));
                }
            }

            let loss_value = tape.value(loss).data()[0];
            if it % check_every == 0 {
                if loss_value > previous * 0.9999 {
                    break;
                }
                previous = loss_value;
            }

            let grads = model.backward(&tape, loss)?;
            let g = match grads.wrt(wvar) {
                Some(g) => g.data().to_vec(),
                None => break,
            };
            let step = (it + 1) as i32;
            let (c1, c2) = (1.0 - ADAM_B1.powi(step), 1.0 - ADAM_B2.powi(step));
            for (((wi, mi), vi), gi) in wv.data_mut().iter_mut().zip(&mut m).zip(&mut v).zip(&g) {
                *mi = ADAM_B1 * *mi + (1.0 - ADAM_B1) * gi;
                *vi = ADAM_B2 * *vi + (1.0 - ADAM_B2) * gi * gi;
                *wi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + ADAM_EPS);
            }
        }

        if succeeded {
            upper = upper.min(constant);
            constant = (lower + upper) / 2.0;
        } else {
            lower = lower.max(constant);
            constant = if upper.is_finite() { (lower + upper) / 2.0 } else { constant * 10.0 };
        }
    }
    best.map(|(_, t)| t.reshape(x.shape())).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{test_models::linear, AttackKind};

    #[test]
    fn finds_small_in_range_perturbation_across_linear_boundary() {
        // logits (x0 + x1, 1) -> class 0 at (0.6, 0.6), boundary at x0 + x1 = 1.
        let mut m = linear(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        m.params_mut()[1].value.data_mut()[1] = 1.0;
        let x = Tensor::new(vec![1, 1, 2], vec![0.6, 0.6]).unwrap();
        let checksum = m.checksum();
        let mut cfg = AttackConfig::new(AttackKind::Cw);
        cfg.cw_iterations = 300;
        let adv = cw_l2(&m, &x, 0, &cfg).unwrap().expect("attack should succeed");
        assert!(adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(m.predict(&adv).unwrap().class, 1);
        // optimum is the projection onto x0 + x1 = 1, at squared distance 0.02
        let d2: Real = adv.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!(d2 < 0.05, "squared distance {d2}");
        assert_eq!(m.checksum(), checksum);
    }

    #[test]
    fn unreachable_class_returns_none() {
        // class 0 wins everywhere on the unit square.
        let mut m = linear(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        m.params_mut()[1].value.data_mut()[0] = 5.0;
        let x = Tensor::new(vec![1, 1, 2], vec![0.5, 0.5]).unwrap();
        let mut cfg = AttackConfig::new(AttackKind::Cw);
        cfg.cw_iterations = 20;
        cfg.cw_binary_steps = 2;
        assert!(cw_l2(&m, &x, 0, &cfg).unwrap().is_none());
    }
}
